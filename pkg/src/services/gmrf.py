from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.stats import multivariate_normal

from services.errors import (
    InvalidCorrelationError,
    InvalidInputError,
    PreconditionError,
    SingularityError,
)
from services.graph_core import (
    Graph,
    connected_components,
    evolve_observed_graph,
    is_acyclic,
    union_graph,
)

logger = logging.getLogger(__name__)

# |J_ij| below this fraction of max |J| is treated as a structural zero
SPARSITY_TOLERANCE = 1e-10


class Hypothesis(IntEnum):
    H0 = 0
    H1 = 1


@dataclass(frozen=True)
class GaussianConditional:
    mean: np.ndarray
    cov: np.ndarray


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """
    Joint Gaussian law N(mean, covariance) of one hypothesis.

    :param mean: mean vector theta, length n
    :param covariance: n x n symmetric positive-definite matrix Sigma
    The dependency graph is read off the sparsity of the precision matrix J = Sigma^-1.
    """

    mean: np.ndarray
    covariance: np.ndarray
    cholesky: np.ndarray = field(init=False, repr=False)
    precision: np.ndarray = field(init=False, repr=False)
    log_det: float = field(init=False, repr=False)
    dependency_graph: Graph = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.covariance, dtype=float)
        n = mean.shape[0]
        if n < 1:
            raise InvalidInputError("A Gaussian model needs at least one node")
        if cov.shape != (n, n):
            raise InvalidInputError(f"Covariance shape {cov.shape} does not match mean length {n}")
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0):
            raise InvalidInputError("Covariance matrix must be symmetric")
        cov = (cov + cov.T) / 2
        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError:
            raise SingularityError("Covariance matrix is not positive definite")

        precision = linalg.cho_solve((chol, True), np.eye(n))
        precision = (precision + precision.T) / 2
        scale = np.max(np.abs(precision))
        rows, cols = np.nonzero(np.triu(np.abs(precision) > SPARSITY_TOLERANCE * scale, k=1))

        object.__setattr__(self, "mean", _readonly(mean))
        object.__setattr__(self, "covariance", _readonly(cov))
        object.__setattr__(self, "cholesky", _readonly(chol))
        object.__setattr__(self, "precision", _readonly(precision))
        object.__setattr__(self, "log_det", float(2 * np.sum(np.log(np.diag(chol)))))
        object.__setattr__(self, "dependency_graph", Graph(n, frozenset(zip(rows.tolist(), cols.tolist()))))

    @property
    def node_count(self) -> int:
        return self.mean.shape[0]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One draw from N(mean, covariance) through the Cholesky factor."""
        return self.mean + self.cholesky @ rng.standard_normal(self.node_count)

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + rng.standard_normal((size, self.node_count)) @ self.cholesky.T

    def conditional(self, targets: Sequence[int], observed: Sequence[tuple[int, float]]) -> GaussianConditional:
        """
        Law of X_targets given the observed (node, value) pairs (Schur complement).
        """
        targets = np.asarray(list(targets), dtype=int)
        obs_nodes = np.asarray([node for node, _ in observed], dtype=int)
        obs_values = np.asarray([value for _, value in observed], dtype=float)
        if np.intersect1d(targets, obs_nodes).size:
            raise InvalidInputError("Target nodes must not be observed")
        if len(set(obs_nodes.tolist())) != obs_nodes.size:
            raise InvalidInputError("Observed nodes must be distinct")

        mean_t = self.mean[targets]
        cov_tt = self.covariance[np.ix_(targets, targets)]
        if obs_nodes.size == 0:
            return GaussianConditional(mean_t.copy(), cov_tt.copy())

        cov_oo = self.covariance[np.ix_(obs_nodes, obs_nodes)]
        cov_ot = self.covariance[np.ix_(obs_nodes, targets)]
        try:
            factor = linalg.cho_factor(cov_oo, lower=True)
        except linalg.LinAlgError:
            raise SingularityError("Observed covariance block is singular")
        gain = linalg.cho_solve(factor, cov_ot)
        mean = mean_t + gain.T @ (obs_values - self.mean[obs_nodes])
        cov = cov_tt - cov_ot.T @ gain
        return GaussianConditional(mean, (cov + cov.T) / 2)

    def log_density(self, values, nodes: Sequence[int]):
        """
        Marginal log density of X_nodes at `values`; a (k, |nodes|) array of rows gives k densities.
        """
        nodes = list(nodes)
        if not nodes:
            return 0.0
        idx = np.asarray(nodes, dtype=int)
        result = multivariate_normal.logpdf(
            np.asarray(values, dtype=float),
            mean=self.mean[idx],
            cov=self.covariance[np.ix_(idx, idx)],
        )
        return float(result) if np.ndim(result) == 0 else np.asarray(result)


@dataclass(frozen=True, eq=False)
class HypothesisPair:
    """
    The two competing models with their priors.

    `union_graph` is E = E0 u E1; `components` labels its connected components. Both covariance
    matrices are block diagonal over those components.
    """

    f0: GaussianModel
    f1: GaussianModel
    prior0: float = 0.5
    prior1: float = 0.5
    union_graph: Graph = field(init=False, repr=False)
    components: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.f0.node_count != self.f1.node_count:
            raise InvalidInputError(
                f"Models disagree on node count: {self.f0.node_count} vs {self.f1.node_count}"
            )
        for name, p in (("prior0", self.prior0), ("prior1", self.prior1)):
            if not 0.0 <= p <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {p}")
        if abs(self.prior0 + self.prior1 - 1.0) > 1e-12:
            raise InvalidInputError("prior0 + prior1 must equal 1")
        graph = union_graph(self.f0.dependency_graph, self.f1.dependency_graph)
        object.__setattr__(self, "union_graph", graph)
        object.__setattr__(self, "components", _readonly(connected_components(graph)))

    @property
    def node_count(self) -> int:
        return self.f0.node_count

    def model(self, hypothesis: Hypothesis | int) -> GaussianModel:
        return self.f1 if int(hypothesis) == 1 else self.f0

    @property
    def identical(self) -> bool:
        return bool(
            np.array_equal(self.f0.mean, self.f1.mean)
            and np.array_equal(self.f0.covariance, self.f1.covariance)
        )


def independence_pair(covariance, mean=None, prior0: float = 0.5) -> HypothesisPair:
    """Test against independence: f0 = N(mean, I), f1 = N(mean, covariance)."""
    covariance = np.asarray(covariance, dtype=float)
    n = covariance.shape[0]
    mean = np.zeros(n) if mean is None else np.asarray(mean, dtype=float)
    return HypothesisPair(
        GaussianModel(mean, np.eye(n)),
        GaussianModel(mean, covariance),
        prior0=prior0,
        prior1=1.0 - prior0,
    )


def _check_correlation(sigma: float) -> None:
    if not abs(sigma) < 1:
        raise InvalidCorrelationError(f"Correlation must satisfy |rho| < 1, got {sigma}")


def _edge_residuals(cov: np.ndarray, tree: Graph) -> dict:
    residuals = {}
    for i, j in sorted(tree.edges):
        r = cov[i, i] * cov[j, j] - cov[i, j] ** 2
        if r <= 0:
            raise SingularityError(f"Edge ({i}, {j}) has Sigma_ii*Sigma_jj - Sigma_ij^2 = {r} <= 0")
        residuals[(i, j)] = r
    return residuals


def tree_determinant_product(covariance, tree: Graph, edge_exponent: float = -1.0) -> float:
    """
    det(J) from the tree product formula
        prod_i Sigma_ii^(deg(i)-1) * prod_(i,j) [Sigma_ii Sigma_jj - Sigma_ij^2]^edge_exponent.
    An exponent of -1 agrees with direct computation.
    """
    cov = np.asarray(covariance, dtype=float)
    if not is_acyclic(tree):
        raise PreconditionError("Tree determinant formula requires an acyclic graph")
    residuals = _edge_residuals(cov, tree)
    log_det = sum((tree.degree(i) - 1) * np.log(cov[i, i]) for i in range(tree.node_count))
    log_det += edge_exponent * sum(np.log(r) for r in residuals.values())
    return float(np.exp(log_det))


@dataclass(frozen=True)
class TreePotential:
    J: np.ndarray
    det_j: float


def potential_from_covariance_tree(covariance, tree: Graph) -> TreePotential:
    """
    Potential (precision) matrix of a tree-structured GMRF from its covariance entries.

    det(J) is computed directly from the Cholesky factor of Sigma and cross-checked against the
    product formula with edge exponent -1.
    """
    cov = np.asarray(covariance, dtype=float)
    n = tree.node_count
    if cov.shape != (n, n):
        raise InvalidInputError(f"Covariance shape {cov.shape} does not match a {n}-node tree")
    if not is_acyclic(tree):
        raise PreconditionError("Closed-form potential matrix requires an acyclic dependency graph")
    residuals = _edge_residuals(cov, tree)

    J = np.zeros((n, n))
    for i in range(n):
        J[i, i] = 1.0 / cov[i, i]
    for (i, j), r in residuals.items():
        J[i, i] += cov[i, j] ** 2 / (cov[i, i] * r)
        J[j, j] += cov[i, j] ** 2 / (cov[j, j] * r)
        J[i, j] = J[j, i] = -cov[i, j] / r

    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        raise SingularityError("Covariance matrix is not positive definite")
    det_j = float(np.exp(-2 * np.sum(np.log(np.diag(chol)))))
    product = tree_determinant_product(cov, tree, edge_exponent=-1.0)
    if not np.isclose(det_j, product, rtol=1e-8):
        logger.warning(f"Tree determinant product {product} disagrees with direct det(J) {det_j}")
    return TreePotential(J, det_j)


def tree_covariance_completion(
    edge_correlations: Mapping[tuple[int, int], float],
    tree: Graph,
    variances: Sequence[float],
) -> np.ndarray:
    """
    Covariance of a tree GMRF from its per-edge correlations.

    Correlations multiply along the unique path between two nodes (Sigma_jk = Sigma_ji Sigma_ii^-1
    Sigma_ik applied recursively); nodes in different components are uncorrelated.
    """
    n = tree.node_count
    variances = np.asarray(variances, dtype=float)
    if variances.shape != (n,):
        raise InvalidInputError(f"Expected {n} variances, got {variances.shape}")
    if np.any(variances <= 0):
        raise InvalidInputError("Variances must be positive")
    if not is_acyclic(tree):
        raise PreconditionError("Covariance completion requires an acyclic graph")

    rho = {}
    for (i, j), value in edge_correlations.items():
        key = (i, j) if i < j else (j, i)
        if key not in tree.edges:
            raise InvalidInputError(f"Correlation given for ({i}, {j}) which is not a tree edge")
        _check_correlation(value)
        rho[key] = float(value)
    missing = tree.edges - rho.keys()
    if missing:
        raise InvalidInputError(f"Missing correlations for edges {sorted(missing)}")

    corr = np.eye(n)
    for source in range(n):
        queue = deque([source])
        seen = {source}
        while queue:
            u = queue.popleft()
            for v in tree.adjacency(u):
                if v in seen:
                    continue
                seen.add(v)
                corr[source, v] = corr[source, u] * rho[(u, v) if u < v else (v, u)]
                queue.append(v)
    scale = np.sqrt(variances)
    return corr * np.outer(scale, scale)


def pairwise_llr(x_i, x_j, sigma: float):
    """
    Log-likelihood ratio of a unit-variance bivariate normal with correlation sigma against
    independence, evaluated at (x_i, x_j).
    """
    _check_correlation(sigma)
    s2 = sigma ** 2
    return 0.5 * (
        np.log(1.0 / (1.0 - s2))
        - s2 / (1.0 - s2) * (np.square(x_i) + np.square(x_j))
        + 2.0 * sigma / (1.0 - s2) * np.multiply(x_i, x_j)
    )


def _validate_path(measurements, path, node_count: int) -> tuple[list, np.ndarray]:
    path = [int(i) for i in path]
    values = np.asarray(measurements, dtype=float).reshape(-1)
    if len(set(path)) != len(path):
        raise InvalidInputError("Sampling path contains duplicate nodes")
    if values.shape[0] != len(path):
        raise InvalidInputError(f"{values.shape[0]} measurements for a path of length {len(path)}")
    for i in path:
        if not 0 <= i < node_count:
            raise InvalidInputError(f"Node {i} is outside [0, {node_count})")
    return path, values


def joint_llr(measurements, path, pair: HypothesisPair) -> float:
    """ln f1(Y; path) - ln f0(Y; path) from the marginal densities of the sampled nodes."""
    path, values = _validate_path(measurements, path, pair.node_count)
    if not path:
        return 0.0
    return pair.f1.log_density(values, path) - pair.f0.log_density(values, path)


def is_unit_independence_test(pair: HypothesisPair) -> bool:
    """f0 = N(theta, I) against a unit-diagonal f1 with the same mean."""
    return bool(
        np.array_equal(pair.f0.covariance, np.eye(pair.node_count))
        and np.allclose(np.diag(pair.f1.covariance), 1.0, atol=1e-12)
        and np.array_equal(pair.f0.mean, pair.f1.mean)
    )


def edge_sum_llr(measurements, path, pair: HypothesisPair) -> float:
    """
    Fast path for the joint LLR: sum of pairwise_llr over the unordered edges of the evolved graph.

    Exact for unit-variance tests against independence while the evolved graph stays acyclic.
    """
    path, values = _validate_path(measurements, path, pair.node_count)
    if not is_unit_independence_test(pair):
        raise PreconditionError("Edge-sum LLR requires a unit-variance test against independence")
    evolved = evolve_observed_graph(pair.union_graph, path)
    if not is_acyclic(evolved):
        raise PreconditionError("Edge-sum LLR requires an acyclic evolved graph")
    centered = dict(zip(path, values - pair.f0.mean[path]))
    return float(sum(
        pairwise_llr(centered[i], centered[j], pair.f1.covariance[i, j])
        for i, j in sorted(evolved.edges)
    ))


@dataclass(frozen=True)
class BhattacharyyaResult:
    coefficient: float
    kappa_n: float


def bhattacharyya(pair: HypothesisPair) -> BhattacharyyaResult:
    """
    Bhattacharyya coefficient B_n = int sqrt(f0 f1) and kappa_n = -ln B_n for two Gaussians.
    """
    avg = (pair.f0.covariance + pair.f1.covariance) / 2
    try:
        chol = linalg.cholesky(avg, lower=True)
    except linalg.LinAlgError:
        raise SingularityError("Average covariance is not positive definite")
    diff = pair.f1.mean - pair.f0.mean
    log_det_avg = 2 * np.sum(np.log(np.diag(chol)))
    mahalanobis = diff @ linalg.cho_solve((chol, True), diff)
    kappa = mahalanobis / 8 + 0.5 * (log_det_avg - 0.5 * (pair.f0.log_det + pair.f1.log_det))
    kappa = max(float(kappa), 0.0)
    return BhattacharyyaResult(float(np.exp(-kappa)), kappa)


def bhattacharyya_eigen(covariance) -> BhattacharyyaResult:
    """Eigenvalue form of B_n for N(theta, Sigma) against N(theta, I)."""
    eigenvalues = linalg.eigvalsh(np.asarray(covariance, dtype=float))
    if np.any(eigenvalues <= 0):
        raise SingularityError("Covariance matrix is not positive definite")
    log_b = 0.5 * np.sum(np.log(2.0) + 0.5 * np.log(eigenvalues) - np.log1p(eigenvalues))
    return BhattacharyyaResult(float(np.exp(log_b)), float(-log_b))
