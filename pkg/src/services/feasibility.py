from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import pandas as pd
from scipy import linalg

from services.engine import DetectionConfig
from services.errors import InvalidInputError, PreconditionError
from services.experiments.scenarios import gen_random_correlation_pair
from services.gmrf import HypothesisPair, bhattacharyya

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeasibilityReport:
    """
    Feasibility certificate of one (pair, config) problem.

    raw_bound is the probability expression before clamping; lower_bound = max(0, raw_bound).
    """

    bhattacharyya: float
    kappa_n: float
    raw_bound: float
    lower_bound: float
    asymptotically_feasible: bool
    alpha_exp: float
    beta_exp: float


def feasibility_from_bhattacharyya(coefficient: float, prior0: float, prior1: float, config: DetectionConfig) -> tuple[float, float]:
    """(raw, clamped) value of 1 - B_n (prior0 / sqrt(beta_n) + prior1 / sqrt(alpha_n))."""
    if not 0.0 <= coefficient <= 1.0:
        raise InvalidInputError(f"Bhattacharyya coefficient must lie in [0, 1], got {coefficient}")
    raw = 1.0 - coefficient * (prior0 / np.sqrt(config.beta) + prior1 / np.sqrt(config.alpha))
    return float(raw), float(min(1.0, max(0.0, raw)))


def asymptotic_feasible(alpha_exp: float, beta_exp: float, kappa: float) -> bool:
    """Sufficient condition for feasibility in large networks: max(alpha, beta) < 2 kappa."""
    if not all(np.isfinite([alpha_exp, beta_exp, kappa])):
        raise InvalidInputError("Exponents and kappa must be finite")
    if kappa < 0:
        raise InvalidInputError(f"kappa must be non-negative, got {kappa}")
    return max(alpha_exp, beta_exp) < 2 * kappa


def feasibility_lower_bound(
    pair: HypothesisPair,
    config: DetectionConfig,
    alpha_exp: float | None = None,
    beta_exp: float | None = None,
) -> FeasibilityReport:
    """
    Probability lower bound on feasibility for this network size, plus the asymptotic check.

    Without explicit exponents, the plug-in values -ln(alpha_n)/n and -ln(beta_n)/n are compared
    with the per-node distance kappa_n / n.
    """
    n = pair.node_count
    result = bhattacharyya(pair)
    raw, clamped = feasibility_from_bhattacharyya(result.coefficient, pair.prior0, pair.prior1, config)
    alpha_exp = -np.log(config.alpha) / n if alpha_exp is None else alpha_exp
    beta_exp = -np.log(config.beta) / n if beta_exp is None else beta_exp
    return FeasibilityReport(
        bhattacharyya=result.coefficient,
        kappa_n=result.kappa_n,
        raw_bound=raw,
        lower_bound=clamped,
        asymptotically_feasible=asymptotic_feasible(alpha_exp, beta_exp, result.kappa_n / n),
        alpha_exp=float(alpha_exp),
        beta_exp=float(beta_exp),
    )


def xi_boundary(eigenvalues) -> np.ndarray:
    """
    Per eigenvalue, the xi at which it enters [(sqrt(1+xi) - sqrt(xi))^2, (sqrt(1+xi) + sqrt(xi))^2].
    lambda lies outside that interval iff xi < (lambda - 1)^2 / (4 lambda).
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    return np.square(eigenvalues - 1.0) / (4.0 * eigenvalues)


def _eigenvalues(covariance) -> np.ndarray:
    covariance = np.asarray(covariance, dtype=float)
    if not np.allclose(np.diag(covariance), 1.0, atol=1e-12):
        raise InvalidInputError("Covariance matrix must have a unit diagonal")
    eigenvalues = linalg.eigvalsh(covariance)
    if np.any(eigenvalues <= 0):
        raise InvalidInputError("Covariance matrix is not positive definite")
    return eigenvalues


def gaussian_eigen_bound(covariance, xi: float) -> float:
    """
    Upper bound (1 + xi)^(-n/8) on B_n for N(theta, Sigma) against N(theta, I), valid when at
    least half of the eigenvalues of Sigma lie outside the xi interval.
    """
    if xi <= 0:
        raise InvalidInputError(f"xi must be positive, got {xi}")
    eigenvalues = _eigenvalues(covariance)
    n = eigenvalues.size
    outside = int(np.sum(xi_boundary(eigenvalues) > xi))
    if 2 * outside < n:
        raise PreconditionError(
            f"{n - outside} of {n} eigenvalues fall inside the interval for xi={xi}; at most {n // 2} may"
        )
    return float((1.0 + xi) ** (-n / 8.0))


def largest_admissible_xi(covariance) -> float:
    """Largest xi for which at least half of the eigenvalues stay outside the interval."""
    eigenvalues = _eigenvalues(covariance)
    needed = -(-eigenvalues.size // 2)
    boundary = np.sort(xi_boundary(eigenvalues))[::-1][needed - 1]
    if boundary <= 0:
        raise PreconditionError("No positive xi keeps half of the eigenvalues outside the interval")
    # the interval is closed, so the boundary value itself is excluded
    return float(np.nextafter(boundary, 0.0))


def feasibility_curve(
    ns: Iterable[int],
    configs: Iterable[DetectionConfig],
    rng: np.random.Generator,
    shared_fraction: float = 0.0,
) -> pd.DataFrame:
    """
    Lower bound on the feasibility probability versus network size for random unit-diagonal
    covariance pairs; `shared_fraction` of the variables keep the same joint law under both.
    """
    configs = list(configs)
    rows = []
    for n in ns:
        scenario = gen_random_correlation_pair(int(n), rng, shared_fraction=shared_fraction)
        result = bhattacharyya(scenario.pair)
        for config in configs:
            raw, clamped = feasibility_from_bhattacharyya(result.coefficient, scenario.pair.prior0, scenario.pair.prior1, config)
            rows.append({
                "n": int(n),
                "alpha": config.alpha,
                "beta": config.beta,
                "shared_fraction": shared_fraction,
                "bhattacharyya": result.coefficient,
                "raw_bound": raw,
                "lower_bound": clamped,
            })
        logger.info(f"Feasibility curve: n={n} B_n={result.coefficient:.3e}")
    return pd.DataFrame(rows)
