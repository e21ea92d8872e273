from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from services.engine import DetectionConfig
from services.errors import ConfigurationError
from services.experiments.scenarios import Scenario
from services.gmrf import GaussianModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NPResult:
    """
    Fixed-sample Neyman-Pearson test on a fixed node subset.

    The test rejects H0 when the LLR exceeds `threshold` and, when it equals it, with
    probability `gamma`; this keeps the false-alarm probability at alpha_target under H0.
    """

    threshold: float
    gamma: float
    p_md_hat: float
    se_md: float
    nodes: tuple
    alpha_target: float
    test_trials: int

    def to_row(self, scenario: Scenario, config: DetectionConfig, seed: int) -> dict:
        return {
            "scenario": scenario.name,
            "policy": "np",
            "n": scenario.node_count,
            "alpha": config.alpha,
            "beta": config.beta,
            "trials": self.test_trials,
            "avg_delay_h0": float(len(self.nodes)),
            "se0": 0.0,
            "avg_delay_h1": float(len(self.nodes)),
            "se1": 0.0,
            "p_fa": self.alpha_target,
            "p_md": self.p_md_hat,
            "forced_stop_rate": 0.0,
            "seed": seed,
        }


def _subset_llr(samples: np.ndarray, nodes: np.ndarray, f0: GaussianModel, f1: GaussianModel) -> np.ndarray:
    sub = samples[:, nodes]
    return np.atleast_1d(f1.log_density(sub, nodes) - f0.log_density(sub, nodes))


def np_baseline(
    scenario: Scenario,
    sample_size: int,
    alpha_target: float,
    calibration_trials: int,
    rng: np.random.Generator,
    test_trials: int | None = None,
) -> NPResult:
    """
    Calibrate an NP threshold on the LLR of `sample_size` randomly chosen nodes as the
    (1 - alpha_target) quantile under H0, then estimate the missed-detection rate under H1.
    """
    n = scenario.node_count
    if not 1 <= sample_size <= n:
        raise ConfigurationError(f"sample_size: must lie in [1, {n}], got {sample_size}")
    if not 0 < alpha_target < 1:
        raise ConfigurationError(f"alpha_target: must lie in (0, 1), got {alpha_target}")
    if calibration_trials < 10 / alpha_target:
        raise ConfigurationError(
            f"calibration_trials: {calibration_trials} is too few for a {alpha_target} quantile; "
            f"need at least {int(np.ceil(10 / alpha_target))}"
        )
    test_trials = calibration_trials if test_trials is None else test_trials
    pair = scenario.pair
    nodes = np.sort(rng.choice(n, size=sample_size, replace=False))

    null = _subset_llr(pair.f0.sample_many(rng, calibration_trials), nodes, pair.f0, pair.f1)
    threshold = float(np.quantile(null, 1 - alpha_target, method="inverted_cdf"))
    above = np.mean(null > threshold)
    at = np.mean(null == threshold)
    gamma = float(np.clip((alpha_target - above) / at, 0.0, 1.0)) if at > 0 else 0.0

    alt = _subset_llr(pair.f1.sample_many(rng, test_trials), nodes, pair.f0, pair.f1)
    p_detect = np.mean(alt > threshold) + gamma * np.mean(alt == threshold)
    p_md = float(1.0 - p_detect)
    logger.info(f"NP baseline on {sample_size} nodes: threshold={threshold:.4f} gamma={gamma:.3f} p_md={p_md:.4f}")
    return NPResult(
        threshold=threshold,
        gamma=gamma,
        p_md_hat=p_md,
        se_md=float(np.sqrt(p_md * (1 - p_md) / test_trials)),
        nodes=tuple(int(i) for i in nodes),
        alpha_target=alpha_target,
        test_trials=test_trials,
    )
