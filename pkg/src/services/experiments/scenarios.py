from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import random_correlation

from services.errors import ConfigurationError
from services.gmrf import GaussianModel, HypothesisPair, independence_pair, tree_covariance_completion
from services.graph_core import Graph, is_acyclic

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    A named hypothesis pair with the parameters it was generated from.

    `cluster` lists the nodes of the correlated set A in cluster scenarios, in line order.
    """

    pair: HypothesisPair
    name: str
    metadata: dict = field(default_factory=dict)
    cluster: tuple | None = None

    @property
    def node_count(self) -> int:
        return self.pair.node_count


def _check_corr(name: str, value: float, low_open: bool = False) -> None:
    ok = (0 < value < 1) if low_open else (abs(value) < 1)
    if not ok:
        bound = "(0, 1)" if low_open else "(-1, 1)"
        raise ConfigurationError(f"{name}: correlation must lie in {bound}, got {value}")


def _tree_scenario(name, n, correlations: dict, metadata: dict, prior0: float = 0.5, cluster=None) -> Scenario:
    tree = Graph(n, frozenset(correlations))
    covariance = tree_covariance_completion(correlations, tree, np.ones(n))
    scenario = Scenario(independence_pair(covariance, prior0=prior0), name, metadata, cluster)
    logger.info(f"Built scenario {name} with n={n} and {len(correlations)} correlated edges")
    return scenario


def _line(nodes, corr: float) -> dict:
    return {(int(u), int(v)): corr for u, v in zip(nodes[:-1], nodes[1:])}


def gen_nearest_neighbor(n: int, M: float, a: float, rng: np.random.Generator, max_attempts: int = 100) -> Scenario:
    """
    Nodes uniform in the unit square, each joined to its nearest neighbour; under H1 the edge
    correlation is M * exp(-a * distance), under H0 the nodes are independent.
    """
    if n < 2:
        raise ConfigurationError(f"n: nearest-neighbour field needs at least 2 nodes, got {n}")
    if not 0 <= M < 1:
        raise ConfigurationError(f"M: must lie in [0, 1), got {M}")
    if a < 0:
        raise ConfigurationError(f"a: must be non-negative, got {a}")

    for attempt in range(max_attempts):
        points = rng.random((n, 2))
        distances, nearest = cKDTree(points).query(points, k=2)
        edges = {}
        for i in range(n):
            j, r = int(nearest[i, 1]), float(distances[i, 1])
            edges[(i, j) if i < j else (j, i)] = M * np.exp(-a * r)
        if is_acyclic(Graph(n, frozenset(edges))):
            break
        logger.warning(f"Nearest-neighbour graph has a cycle on attempt {attempt + 1}; resampling")
    else:
        raise ConfigurationError(f"n: no acyclic nearest-neighbour graph after {max_attempts} attempts")
    return _tree_scenario("nearest-neighbor", n, edges, {"n": n, "M": M, "a": a})


def gen_replicated_subgraph(copies: int, strong_corr: float, weak_corr: float) -> Scenario:
    """`copies` independent 3-node paths with edge correlations strong_corr and weak_corr."""
    if copies < 1:
        raise ConfigurationError(f"copies: must be at least 1, got {copies}")
    _check_corr("strong_corr", strong_corr)
    _check_corr("weak_corr", weak_corr)
    edges = {}
    for k in range(copies):
        edges[(3 * k, 3 * k + 1)] = strong_corr
        edges[(3 * k + 1, 3 * k + 2)] = weak_corr
    metadata = {"copies": copies, "strong_corr": strong_corr, "weak_corr": weak_corr}
    return _tree_scenario("replicated-subgraph", 3 * copies, edges, metadata)


def _check_cluster_size(n: int, p: int) -> None:
    if n < 1:
        raise ConfigurationError(f"n: must be positive, got {n}")
    if not 1 <= p <= n:
        raise ConfigurationError(f"p: cluster size must lie in [1, n={n}], got {p}")


def gen_cluster(n: int, p: int, sigma_A: float, rng: np.random.Generator) -> Scenario:
    """
    A line of p randomly placed nodes with per-edge correlation sigma_A under H1; every other
    node is independent. p == n gives a single homogeneous line.
    """
    _check_cluster_size(n, p)
    _check_corr("sigma_A", sigma_A, low_open=True)
    cluster = tuple(int(i) for i in rng.permutation(n)[:p])
    return _tree_scenario(
        "cluster", n, _line(cluster, sigma_A), {"n": n, "p": p, "sigma_A": sigma_A}, cluster=cluster,
    )


def gen_two_cluster(n: int, p: int, a_corr: float, b_corr: float, rng: np.random.Generator) -> Scenario:
    """Two disjoint lines: A with p nodes and correlation a_corr, B with the rest and b_corr."""
    _check_cluster_size(n, p)
    if p == n:
        raise ConfigurationError(f"p: two-cluster scenario needs p < n, got p={p}, n={n}")
    _check_corr("a_corr", a_corr, low_open=True)
    _check_corr("b_corr", b_corr, low_open=True)
    order = [int(i) for i in rng.permutation(n)]
    cluster, rest = tuple(order[:p]), order[p:]
    edges = {**_line(cluster, a_corr), **_line(rest, b_corr)}
    metadata = {"n": n, "p": p, "a_corr": a_corr, "b_corr": b_corr}
    return _tree_scenario("two-cluster", n, edges, metadata, cluster=cluster)


def gen_random_tree(n: int, corr: float, rng: np.random.Generator) -> Scenario:
    """Uniformly attached random tree on n nodes with the same correlation on every edge."""
    if n < 1:
        raise ConfigurationError(f"n: must be positive, got {n}")
    _check_corr("corr", corr)
    order = rng.permutation(n)
    edges = {}
    for k in range(1, n):
        u, v = int(order[k]), int(order[rng.integers(k)])
        edges[(u, v) if u < v else (v, u)] = corr
    return _tree_scenario("random-tree", n, edges, {"n": n, "corr": corr})


def _random_correlation(n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 1:
        return np.eye(1)
    eigs = rng.uniform(0.05, 1.0, n)
    eigs *= n / eigs.sum()
    matrix = random_correlation.rvs(eigs, random_state=rng)
    matrix = (matrix + matrix.T) / 2
    np.fill_diagonal(matrix, 1.0)
    return matrix


def gen_random_correlation_pair(n: int, rng: np.random.Generator, shared_fraction: float = 0.0) -> Scenario:
    """
    Two random unit-diagonal covariance matrices. The first round(shared_fraction * n) variables
    keep the same joint law under both hypotheses.
    """
    if n < 2:
        raise ConfigurationError(f"n: random correlation pair needs at least 2 nodes, got {n}")
    if not 0 <= shared_fraction < 1:
        raise ConfigurationError(f"shared_fraction: must lie in [0, 1), got {shared_fraction}")
    cov0 = _random_correlation(n, rng)
    shared = int(round(shared_fraction * n))
    if shared:
        cov1 = np.zeros((n, n))
        cov1[:shared, :shared] = cov0[:shared, :shared]
        cov1[shared:, shared:] = _random_correlation(n - shared, rng)
    else:
        cov1 = _random_correlation(n, rng)
    mean = np.zeros(n)
    pair = HypothesisPair(GaussianModel(mean, cov0), GaussianModel(mean, cov1))
    return Scenario(pair, "random-correlation", {"n": n, "shared_fraction": shared_fraction})


def scenario_from_models(f0: GaussianModel, f1: GaussianModel, name: str = "model-files", prior0: float = 0.5) -> Scenario:
    return Scenario(HypothesisPair(f0, f1, prior0=prior0, prior1=1.0 - prior0), name, {"n": f0.node_count})
