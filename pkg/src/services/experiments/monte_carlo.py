from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from services.engine import DetectionConfig, TrialResult, run_trial
from services.errors import ConfigurationError
from services.experiments.scenarios import Scenario
from services.gmrf import Hypothesis, HypothesisPair
from services.policies.base import SelectionPolicy

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "scenario", "policy", "n", "alpha", "beta", "trials",
    "avg_delay_h0", "se0", "avg_delay_h1", "se1",
    "p_fa", "p_md", "forced_stop_rate", "seed",
]


def binomial_se(p: float, trials: int) -> float:
    if trials <= 0 or np.isnan(p):
        return float("nan")
    return float(np.sqrt(p * (1 - p) / trials))


def _mean_se(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    if values.size == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


@dataclass(frozen=True)
class RunStats:
    """
    Aggregate of `trials` runs under each hypothesis.

    Error frequencies count every trial, forced stops included; the *_exit variants only count
    trials that left the SPRT band.
    """

    scenario: str
    policy: str
    n: int
    alpha: float
    beta: float
    trials: int
    seed: int
    avg_delay_h0: float
    se0: float
    avg_delay_h1: float
    se1: float
    avg_delay_weighted: float
    se_weighted: float
    p_fa: float
    se_fa: float
    p_md: float
    se_md: float
    forced_stop_rate: float
    p_fa_exit: float
    p_md_exit: float
    results: tuple = field(default=(), repr=False, compare=False)

    def to_row(self) -> dict:
        return {column: getattr(self, column) for column in CSV_COLUMNS}

    def trials_for(self, truth: Hypothesis) -> list[TrialResult]:
        return [r for r in self.results if r.truth == truth]


def summarize(results: list[TrialResult], scenario: Scenario, policy_name: str, config: DetectionConfig, seed: int) -> RunStats:
    """Aggregate trial results; only sums and counts, so the order of results does not matter."""
    h0 = [r for r in results if r.truth == Hypothesis.H0]
    h1 = [r for r in results if r.truth == Hypothesis.H1]
    trials = len(h0)
    pair = scenario.pair

    avg0, se0 = _mean_se([r.stopping_time for r in h0])
    avg1, se1 = _mean_se([r.stopping_time for r in h1])
    p_fa = float(np.mean([r.decision == Hypothesis.H1 for r in h0])) if h0 else float("nan")
    p_md = float(np.mean([r.decision == Hypothesis.H0 for r in h1])) if h1 else float("nan")

    def exit_rate(group, wrong):
        exited = [r for r in group if not r.forced_stop]
        return float(np.mean([r.decision == wrong for r in exited])) if exited else float("nan")

    return RunStats(
        scenario=scenario.name,
        policy=policy_name,
        n=pair.node_count,
        alpha=config.alpha,
        beta=config.beta,
        trials=trials,
        seed=seed,
        avg_delay_h0=avg0,
        se0=se0,
        avg_delay_h1=avg1,
        se1=se1,
        avg_delay_weighted=pair.prior0 * avg0 + pair.prior1 * avg1,
        se_weighted=float(np.hypot(pair.prior0 * se0, pair.prior1 * se1)),
        p_fa=p_fa,
        se_fa=binomial_se(p_fa, len(h0)),
        p_md=p_md,
        se_md=binomial_se(p_md, len(h1)),
        forced_stop_rate=float(np.mean([r.forced_stop for r in results])) if results else float("nan"),
        p_fa_exit=exit_rate(h0, Hypothesis.H1),
        p_md_exit=exit_rate(h1, Hypothesis.H0),
        results=tuple(results),
    )


def trial_seeds(trials: int, base_seed: int) -> list[tuple[int, Hypothesis]]:
    """H0 trials take seeds base_seed .. base_seed+trials-1, H1 trials the next `trials` seeds."""
    return [(base_seed + k, Hypothesis.H0) for k in range(trials)] + [
        (base_seed + trials + k, Hypothesis.H1) for k in range(trials)
    ]


def run_chunk(pair: HypothesisPair, policy: SelectionPolicy, config: DetectionConfig, tasks) -> list[TrialResult]:
    """Run a list of (seed, truth) trials; module level so worker processes can pickle it."""
    results = []
    for seed, truth in tasks:
        try:
            results.append(run_trial(pair, truth, policy, config, np.random.default_rng(seed), seed=seed))
        except ConfigurationError:
            raise
        except ValueError as e:
            raise type(e)(f"trial seed={seed} truth={truth.name}: {e}") from e
    return results


def monte_carlo(
    scenario: Scenario,
    policy: SelectionPolicy,
    config: DetectionConfig,
    trials: int,
    base_seed: int,
    workers: int = 1,
    chunk_size: int = 50,
) -> RunStats:
    """
    Run `trials` trials under H0 and under H1 and aggregate them.

    Every trial owns a generator seeded from base_seed, so the output is identical for any
    number of workers.
    """
    if trials < 1:
        raise ConfigurationError(f"trials: must be at least 1, got {trials}")
    if workers < 1:
        raise ConfigurationError(f"workers: must be at least 1, got {workers}")
    tasks = trial_seeds(trials, base_seed)
    logger.info(f"Running {trials} trials per hypothesis of {scenario.name} with policy {policy.name} on {workers} worker(s)")

    if workers == 1:
        results = run_chunk(scenario.pair, policy, config, tasks)
    else:
        chunks = [tasks[i:i + chunk_size] for i in range(0, len(tasks), chunk_size)]
        by_start = {}
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {
                executor.submit(run_chunk, scenario.pair, policy, config, chunk): start
                for start, chunk in zip(range(0, len(tasks), chunk_size), chunks)
            }
            for future in as_completed(futures):
                by_start[futures[future]] = future.result()
        results = [r for start in sorted(by_start) for r in by_start[start]]

    stats = summarize(results, scenario, policy.name, config, base_seed)
    logger.info(
        f"Finished {scenario.name}/{policy.name}: delay H0={stats.avg_delay_h0:.2f} H1={stats.avg_delay_h1:.2f} "
        f"p_fa={stats.p_fa:.4f} p_md={stats.p_md:.4f}"
    )
    return stats
