import logging
from collections import defaultdict

import numpy as np

from services.errors import ConfigurationError, PreconditionError
from services.gmrf import HypothesisPair
from services.graph_core import is_acyclic
from services.info_measures import PieceConditionals
from services.policies.base import SelectionContext, SelectionPolicy, subsets_containing

logger = logging.getLogger(__name__)


class ExhaustiveCorrelationPolicy(SelectionPolicy):
    """
    Correlation-based rule by brute force: for each candidate i, the best average information
    M_l^i(t, S) / |S| over subsets S of unobserved nodes containing i with |S| <= max_subset_size.

    Candidate subsets are drawn from the residual piece of i. Information is additive over
    pieces, so the maximal value and the set of maximising nodes are the same as with the full
    unobserved set.
    """

    name = "correlation-exhaustive"

    def piece_scores(self, mctx, direction, piece, max_subset_size):
        conditionals = PieceConditionals(mctx, piece)
        subset_values = {}
        scores = np.empty(len(piece.nodes))
        for k, node in enumerate(piece.nodes):
            best = -np.inf
            for subset in subsets_containing(node, piece.nodes, max_subset_size):
                if subset not in subset_values:
                    positions = [conditionals.index[j] for j in subset]
                    subset_values[subset] = conditionals.subset_kl(direction, positions) / len(subset)
                best = max(best, subset_values[subset])
            scores[k] = best
        logger.debug(f"Scored {len(piece.nodes)} nodes over {len(subset_values)} subsets")
        return scores


class NeighborhoodCorrelationPolicy(SelectionPolicy):
    """
    Correlation-based rule on acyclic union graphs, searching only subsets of the neighbourhood
    {i} u (N_i n unobserved).

    Given X_i the branches at i are conditionally independent, so
        M_l^i(t, S) = D_l^i + sum_{j in S \\ i} (J_l({i, j}) - D_l^i)
    and the best subset of each size takes the largest gains.
    """

    name = "correlation"

    def __init__(self, pair: HypothesisPair):
        if not is_acyclic(pair.union_graph):
            raise PreconditionError("Neighbourhood search requires an acyclic union dependency graph")
        super().__init__(pair)

    def check_compatible(self, pair: HypothesisPair) -> None:
        if not is_acyclic(pair.union_graph):
            raise ConfigurationError("policy: neighbourhood correlation rule needs an acyclic union graph")

    def piece_scores(self, mctx, direction, piece, max_subset_size):
        conditionals = PieceConditionals(mctx, piece)
        single = conditionals.node_kl(direction)
        graph = mctx.pair.union_graph

        a, b = [], []
        for u in piece.nodes:
            for v in graph.adjacency(u):
                if u < v and v in conditionals.index:
                    a.append(conditionals.index[u])
                    b.append(conditionals.index[v])
        pair_values = conditionals.pair_kl(direction, a, b)

        gains = defaultdict(list)
        for pa, pb, value in zip(a, b, pair_values):
            gains[pa].append(value - single[pa])
            gains[pb].append(value - single[pb])

        scores = single.copy()
        for k, node_gains in gains.items():
            totals = single[k] + np.cumsum(np.sort(node_gains)[::-1])
            scores[k] = max(single[k], float(np.max(totals / np.arange(2, len(totals) + 2))))
        return scores


def correlation_select_exhaustive(ctx: SelectionContext, rng: np.random.Generator) -> int:
    return ExhaustiveCorrelationPolicy(ctx.measure_ctx.pair).select(ctx, rng)


def correlation_select_neighborhood(ctx: SelectionContext, rng: np.random.Generator) -> int:
    return NeighborhoodCorrelationPolicy(ctx.measure_ctx.pair).select(ctx, rng)
