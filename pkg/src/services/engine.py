from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import norm

from services.errors import InvalidStateError, SingularityError
from services.gmrf import Hypothesis, HypothesisPair
from services.info_measures import VARIANCE_FLOOR, MeasureContext, conditional_pair
from services.policies.base import ScoreCache, SelectionContext, SelectionPolicy, ml_decision

logger = logging.getLogger(__name__)


class DetectionConfig(BaseModel):
    """Error budgets of one detection problem and the SPRT band they induce."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0, lt=1, description="false-alarm budget")
    beta: float = Field(gt=0, lt=1, description="missed-detection budget")
    max_subset_size: int = Field(default=4, ge=1)

    @property
    def lower_threshold(self) -> float:
        return float(np.log(self.beta))

    @property
    def upper_threshold(self) -> float:
        return float(-np.log(self.alpha))


@dataclass(frozen=True)
class TrialResult:
    stopping_time: int
    decision: Hypothesis
    final_llr: float
    path: tuple
    values: tuple
    forced_stop: bool
    truth: Hypothesis
    seed: int | None = None

    @property
    def correct(self) -> bool:
        return self.decision == self.truth


def llr_update(prev_llr: float, new_node: int, new_value: float, ctx: MeasureContext) -> float:
    """Lambda_t = Lambda_{t-1} + ln f1(y | F) - ln f0(y | F) for the newly revealed node."""
    c0, c1 = conditional_pair(ctx, [new_node])
    var0, var1 = float(c0.cov[0, 0]), float(c1.cov[0, 0])
    if min(var0, var1) < VARIANCE_FLOOR:
        raise SingularityError(f"Conditional variance of node {new_node} is degenerate")
    return prev_llr + float(
        norm.logpdf(new_value, loc=c1.mean[0], scale=np.sqrt(var1))
        - norm.logpdf(new_value, loc=c0.mean[0], scale=np.sqrt(var0))
    )


class SamplingState:
    """
    The filtration of one trial: which nodes were sampled, in what order, what they showed and
    the running LLR. The full realization is drawn up front and revealed node by node.
    """

    def __init__(self, pair: HypothesisPair, realization: np.ndarray):
        self.pair = pair
        self.realization = np.asarray(realization, dtype=float)
        self.measure_ctx = MeasureContext(pair)
        self.remaining_mask = np.ones(pair.node_count, dtype=bool)
        self.llr = 0.0
        self.cache = ScoreCache(pair.node_count)

    @property
    def t(self) -> int:
        return len(self.measure_ctx.observed)

    @property
    def path(self) -> tuple:
        return tuple(i for i, _ in self.measure_ctx.observed)

    @property
    def values(self) -> tuple:
        return tuple(y for _, y in self.measure_ctx.observed)

    def remaining(self) -> np.ndarray:
        return np.flatnonzero(self.remaining_mask)

    def selection_context(self, max_subset_size: int) -> SelectionContext:
        return SelectionContext(self.measure_ctx, self.remaining(), self.llr, max_subset_size, self.cache)

    def observe(self, node: int) -> float:
        node = int(node)
        if not 0 <= node < self.pair.node_count or not self.remaining_mask[node]:
            raise InvalidStateError(f"Node {node} cannot be sampled")
        value = float(self.realization[node])
        self.llr = llr_update(self.llr, node, value, self.measure_ctx)
        stale = [j for j in self.measure_ctx.residual_piece(node).nodes if j != node]
        self.cache.invalidate(stale)
        self.measure_ctx = self.measure_ctx.extended(node, value)
        self.remaining_mask[node] = False
        return value


def run_trial(
    pair: HypothesisPair,
    truth: Hypothesis | int,
    policy: SelectionPolicy,
    config: DetectionConfig,
    rng: np.random.Generator,
    seed: int | None = None,
) -> TrialResult:
    """
    One run of the sequential strategy: select, reveal, update, until the LLR leaves the band
    (ln beta, -ln alpha) or every node has been sampled.
    """
    policy.check_compatible(pair)
    truth = Hypothesis(int(truth))
    state = SamplingState(pair, pair.model(truth).sample(rng))
    lower, upper = config.lower_threshold, config.upper_threshold

    exited = False
    while state.remaining_mask.any():
        node = policy.select(state.selection_context(config.max_subset_size), rng)
        state.observe(node)
        if state.llr <= lower or state.llr >= upper:
            exited = True
            break

    decision = ml_decision(state.llr)
    logger.debug(
        f"Trial seed={seed} truth={truth.name} stopped at t={state.t} llr={state.llr:.4f} "
        f"decision={decision.name} forced={not exited}"
    )
    return TrialResult(
        stopping_time=state.t,
        decision=decision,
        final_llr=state.llr,
        path=state.path,
        values=state.values,
        forced_stop=not exited,
        truth=truth,
        seed=seed,
    )


@dataclass(frozen=True)
class SprtComparison:
    """
    The same realization under both stopping conventions. The unbounded SPRT has no decision
    when the band is never left.
    """

    bounded: TrialResult
    unbounded_stopping_time: int
    unbounded_decision: Hypothesis | None

    @property
    def agree(self) -> bool:
        return self.unbounded_decision == self.bounded.decision


def compare_sprt_variant(
    pair: HypothesisPair,
    truth: Hypothesis | int,
    policy: SelectionPolicy,
    config: DetectionConfig,
    rng: np.random.Generator,
    seed: int | None = None,
) -> SprtComparison:
    bounded = run_trial(pair, truth, policy, config, rng, seed=seed)
    return SprtComparison(
        bounded=bounded,
        unbounded_stopping_time=bounded.stopping_time,
        unbounded_decision=None if bounded.forced_stop else bounded.decision,
    )
