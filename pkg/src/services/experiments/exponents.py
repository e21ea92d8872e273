from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from services.engine import DetectionConfig
from services.errors import ConfigurationError, InvalidInputError
from services.experiments.monte_carlo import RunStats, monte_carlo
from services.experiments.scenarios import Scenario
from services.gmrf import Hypothesis
from services.policies.base import SelectionPolicy
from services.policies.factory import make_policy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NllrEstimate:
    i0_hat: float
    se0: float
    i1_hat: float
    se1: float


def estimate_nllr(scenario: Scenario, subset: Sequence[int], trials: int, rng: np.random.Generator) -> NllrEstimate:
    """
    Monte Carlo normalized LLRs of a node subset U:
    E_0[(1/|U|) ln f0/f1] and E_1[(1/|U|) ln f1/f0] over the marginals of U.
    """
    subset = [int(i) for i in subset]
    if not subset:
        raise InvalidInputError("Subset must not be empty")
    if trials < 2:
        raise ConfigurationError(f"trials: need at least 2 for a standard error, got {trials}")
    pair = scenario.pair

    def normalized(model, sign):
        draws = model.sample_many(rng, trials)[:, subset]
        llr = np.atleast_1d(pair.f1.log_density(draws, subset) - pair.f0.log_density(draws, subset))
        values = sign * llr / len(subset)
        return float(values.mean()), float(values.std(ddof=1) / np.sqrt(trials))

    i0, se0 = normalized(pair.f0, -1.0)
    i1, se1 = normalized(pair.f1, 1.0)
    return NllrEstimate(i0, se0, i1, se1)


def line_graph_information(corr: float, direction: int) -> float:
    """
    Per-edge KL of a homogeneous unit-variance line against independence, i.e. the large-subset
    limit of the normalized LLR under H_direction.
    """
    if not 0 < abs(corr) < 1:
        raise InvalidInputError(f"Correlation must satisfy 0 < |rho| < 1, got {corr}")
    s2 = corr ** 2
    if int(direction) == 1:
        return float(-0.5 * np.log(1 - s2))
    return float(s2 / (1 - s2) + 0.5 * np.log(1 - s2))


def two_cluster_ratio(a: float, b: float, direction: int) -> float:
    """I^A / I^B for two lines with edge correlations a and b."""
    return line_graph_information(a, direction) / line_graph_information(b, direction)


@dataclass(frozen=True)
class ExponentPoint:
    stats: RunStats
    exp_fa: float
    exp_fa_is_bound: bool
    exp_md: float
    exp_md_is_bound: bool


def _exponent(p_hat: float, trials: int, delay: float) -> tuple[float, bool]:
    if p_hat > 0:
        return float(-np.log(p_hat) / delay), False
    # no errors seen: rule of three gives a one-sided bound
    return float(-np.log(3.0 / trials) / delay), True


def error_exponents(stats: RunStats) -> ExponentPoint:
    exp_fa, fa_bound = _exponent(stats.p_fa, stats.trials, stats.avg_delay_h1)
    exp_md, md_bound = _exponent(stats.p_md, stats.trials, stats.avg_delay_h0)
    if fa_bound or md_bound:
        logger.warning(
            f"No errors observed at alpha={stats.alpha} beta={stats.beta}; exponent reported as a rule-of-three bound"
        )
    return ExponentPoint(stats, exp_fa, fa_bound, exp_md, md_bound)


def estimate_error_exponents(
    scenario: Scenario,
    policy: SelectionPolicy,
    configs: Iterable[DetectionConfig],
    trials: int,
    base_seed: int,
    workers: int = 1,
) -> list[ExponentPoint]:
    """Empirical (delay, exponent) curve over a sweep of error budgets."""
    return [
        error_exponents(monte_carlo(scenario, policy, config, trials, base_seed, workers=workers))
        for config in configs
    ]


def sweep_parameter(
    build: Callable[[float], Scenario],
    values: Iterable[float],
    policy_name: str,
    config: DetectionConfig,
    trials: int,
    base_seed: int,
    workers: int = 1,
) -> list[tuple[float, RunStats]]:
    """Delay and errors as a scenario parameter varies; a fresh scenario is built per value."""
    points = []
    for value in values:
        scenario = build(value)
        policy = make_policy(policy_name, scenario.pair)
        points.append((value, monte_carlo(scenario, policy, config, trials, base_seed, workers=workers)))
    return points


def samples_outside(path: Sequence[int], cluster: Iterable[int], before_first_entry: bool = False) -> int:
    """Samples of `path` taken outside `cluster`, optionally only those before the first entry."""
    cluster = set(cluster)
    count = 0
    for node in path:
        if node in cluster:
            if before_first_entry:
                break
            continue
        count += 1
    return count


def mean_samples_outside(stats: RunStats, cluster: Iterable[int], truth: Hypothesis = Hypothesis.H1,
                         before_first_entry: bool = False) -> float:
    cluster = set(cluster)
    counts = [samples_outside(r.path, cluster, before_first_entry) for r in stats.trials_for(truth)]
    return float(np.mean(counts)) if counts else float("nan")
