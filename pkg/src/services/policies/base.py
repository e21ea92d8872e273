from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from services.errors import ConfigurationError, InvalidInputError, InvalidStateError
from services.gmrf import HypothesisPair, Hypothesis
from services.info_measures import MeasureContext, ResidualPiece

logger = logging.getLogger(__name__)

# relative tolerance under which two scores count as tied
TIE_TOLERANCE = 1e-12


def ml_decision(llr: float) -> Hypothesis:
    """Maximum-likelihood decision on the running LLR; zero goes to H1."""
    return Hypothesis.H1 if llr >= 0 else Hypothesis.H0


class ScoreCache:
    """
    Per-trial node scores for both directions. NaN marks a score that must be recomputed;
    the engine invalidates the residual piece of every newly observed node.
    """

    def __init__(self, node_count: int):
        self.node_count = node_count
        self.scores = {h: np.full(node_count, np.nan) for h in (0, 1)}

    def direction(self, h: int) -> np.ndarray:
        return self.scores[int(h)]

    def invalidate(self, nodes: Sequence[int]) -> None:
        idx = np.asarray(list(nodes), dtype=int)
        for arr in self.scores.values():
            arr[idx] = np.nan


@dataclass(frozen=True, eq=False)
class SelectionContext:
    """
    :param measure_ctx: observations so far
    :param remaining: unobserved nodes
    :param current_llr: running LLR before the next sample
    :param max_subset_size: cap on |S| for exhaustive subset search
    :param cache: optional per-trial score cache
    """

    measure_ctx: MeasureContext
    remaining: np.ndarray
    current_llr: float = 0.0
    max_subset_size: int = 4
    cache: ScoreCache | None = field(default=None, repr=False)

    def __post_init__(self):
        remaining = np.unique(np.asarray(self.remaining, dtype=int))
        if self.max_subset_size < 1:
            raise ConfigurationError(f"max_subset_size must be at least 1, got {self.max_subset_size}")
        observed = np.asarray([i for i, _ in self.measure_ctx.observed], dtype=int)
        if np.isin(remaining, observed).any():
            raise InvalidInputError("Remaining nodes must not be observed")
        if remaining.size + observed.size != self.measure_ctx.node_count:
            raise InvalidInputError("Remaining and observed nodes must cover the whole network")
        object.__setattr__(self, "remaining", remaining)

    @classmethod
    def fresh(cls, pair: HypothesisPair, observed=(), current_llr: float = 0.0, max_subset_size: int = 4):
        """Context built from scratch: everything not observed is remaining."""
        measure_ctx = MeasureContext(pair, observed)
        return cls(measure_ctx, np.asarray(measure_ctx.unobserved(), dtype=int), current_llr, max_subset_size)


def pick_max(scores: np.ndarray, remaining: np.ndarray, rng: np.random.Generator) -> int:
    """
    Node of `remaining` with the largest score; ties within TIE_TOLERANCE are broken uniformly
    over the sorted candidates with one draw from rng.
    """
    values = scores[remaining]
    if np.isnan(values).any():
        raise InvalidStateError("Scores missing for some remaining nodes")
    best = values.max()
    candidates = remaining[values >= best - TIE_TOLERANCE * max(1.0, abs(best))]
    if candidates.size == 1:
        return int(candidates[0])
    return int(candidates[rng.integers(candidates.size)])


def subsets_containing(node: int, pool: Sequence[int], max_size: int) -> Iterator[tuple[int, ...]]:
    """Subsets of `pool` that contain `node`, size at most max_size, in lexicographic order."""
    others = sorted(j for j in pool if j != node)
    for k in range(0, min(max_size, len(others) + 1)):
        for rest in combinations(others, k):
            yield tuple(sorted((node,) + rest))


def neighborhood_set(ctx: SelectionContext, node: int) -> list[int]:
    """The node plus its unobserved neighbours in the union graph."""
    graph = ctx.measure_ctx.pair.union_graph
    return sorted({node} | {j for j in graph.adjacency(node) if not ctx.measure_ctx.is_observed(j)})


class SelectionPolicy:
    """
    Base class of the node-selection rules.

    Subclasses score every node of a residual piece at once; scores of a node depend only on its
    piece, so the base class caches them per trial and, for border-free pieces, across trials.
    """

    name = "base"

    def __init__(self, pair: HypothesisPair):
        self.pair = pair
        self._pristine = {}

    def check_compatible(self, pair: HypothesisPair) -> None:
        """Raise ConfigurationError when the policy cannot run on `pair`."""

    def select(self, ctx: SelectionContext, rng: np.random.Generator) -> int:
        if ctx.remaining.size == 0:
            raise InvalidStateError("No remaining nodes to select from")
        direction = int(ml_decision(ctx.current_llr))
        return pick_max(self.scores(ctx, direction), ctx.remaining, rng)

    def scores(self, ctx: SelectionContext, direction: int) -> np.ndarray:
        """Scores of all remaining nodes (other entries are meaningless)."""
        mctx = ctx.measure_ctx
        if mctx.pair is not self.pair:
            self.pair = mctx.pair
            self._pristine = {}
        cache = ctx.cache if ctx.cache is not None else ScoreCache(mctx.node_count)
        scores = cache.direction(direction)
        stale = ctx.remaining[np.isnan(scores[ctx.remaining])]
        for node in stale:
            if not np.isnan(scores[node]):
                continue
            piece = mctx.residual_piece(int(node))
            scores[list(piece.nodes)] = self._cached_piece_scores(mctx, direction, piece, ctx.max_subset_size)
        return scores

    def _cached_piece_scores(self, mctx, direction, piece: ResidualPiece, max_subset_size: int) -> np.ndarray:
        if piece.boundary:
            return self.piece_scores(mctx, direction, piece, max_subset_size)
        # a border-free piece is a whole untouched union component
        key = (int(self.pair.components[piece.nodes[0]]), direction, max_subset_size)
        if key not in self._pristine:
            self._pristine[key] = self.piece_scores(mctx, direction, piece, max_subset_size)
        return self._pristine[key]

    def piece_scores(self, mctx: MeasureContext, direction: int, piece: ResidualPiece, max_subset_size: int) -> np.ndarray:
        raise NotImplementedError
