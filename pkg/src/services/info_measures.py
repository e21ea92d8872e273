from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from services.errors import InvalidInputError, SingularityError
from services.gmrf import GaussianConditional, HypothesisPair, is_unit_independence_test
from services.graph_core import is_acyclic

logger = logging.getLogger(__name__)

# conditional variances below this are treated as degenerate
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class ResidualPiece:
    """
    A connected set of unobserved nodes of the union graph together with the observed nodes
    that border it. Given the border values, the piece is independent of every other observation.
    """

    nodes: tuple
    boundary: tuple


class MeasureContext:
    """
    What has been observed so far: the hypothesis pair and the ordered (node, value) list.

    Contexts are immutable; `extended` returns the context after one more observation.
    Conditioning only ever uses the border of the residual piece of the targets, which is exact
    because both models are Markov with respect to the union graph.
    """

    def __init__(self, pair: HypothesisPair, observed: Iterable[tuple[int, float]] = ()):
        observed = tuple((int(i), float(y)) for i, y in observed)
        values = dict(observed)
        if len(values) != len(observed):
            raise InvalidInputError("Observed nodes must be distinct")
        for i in values:
            if not 0 <= i < pair.node_count:
                raise InvalidInputError(f"Observed node {i} is outside [0, {pair.node_count})")
        self._init(pair, observed, values)

    def _init(self, pair, observed, values):
        self.pair = pair
        self.observed = observed
        self._values = values
        self._pieces = {}

    @property
    def node_count(self) -> int:
        return self.pair.node_count

    def is_observed(self, node: int) -> bool:
        return node in self._values

    def value(self, node: int) -> float:
        return self._values[node]

    def unobserved(self) -> list[int]:
        return [i for i in range(self.node_count) if i not in self._values]

    def extended(self, node: int, value: float) -> "MeasureContext":
        node = int(node)
        if not 0 <= node < self.node_count:
            raise InvalidInputError(f"Node {node} is outside [0, {self.node_count})")
        if node in self._values:
            raise InvalidInputError(f"Node {node} is already observed")
        values = dict(self._values)
        values[node] = float(value)
        ctx = MeasureContext.__new__(MeasureContext)
        ctx._init(self.pair, self.observed + ((node, float(value)),), values)
        return ctx

    def residual_piece(self, node: int) -> ResidualPiece:
        if node in self._pieces:
            return self._pieces[node]
        if node in self._values:
            raise InvalidInputError(f"Node {node} is observed and belongs to no residual piece")
        graph = self.pair.union_graph
        members = {node}
        border = set()
        queue = deque([node])
        while queue:
            u = queue.popleft()
            for v in graph.adjacency(u):
                if v in self._values:
                    border.add(v)
                elif v not in members:
                    members.add(v)
                    queue.append(v)
        piece = ResidualPiece(
            tuple(sorted(members)),
            tuple((b, self._values[b]) for b in sorted(border)),
        )
        for member in members:
            self._pieces[member] = piece
        return piece

    def evolved_neighbors(self, node: int) -> tuple[tuple[int, float], ...]:
        """Observed nodes joined to `node` in the evolved observation graph, with their values."""
        return self.residual_piece(node).boundary


def _validate_targets(ctx: MeasureContext, targets) -> list[int]:
    targets = [int(i) for i in targets]
    if not targets:
        raise InvalidInputError("Target set must not be empty")
    if len(set(targets)) != len(targets):
        raise InvalidInputError("Target nodes must be distinct")
    for i in targets:
        if not 0 <= i < ctx.node_count:
            raise InvalidInputError(f"Node {i} is outside [0, {ctx.node_count})")
        if ctx.is_observed(i):
            raise InvalidInputError(f"Node {i} is already observed")
    return targets


def conditional_pair(ctx: MeasureContext, targets: Sequence[int]) -> tuple[GaussianConditional, GaussianConditional]:
    """Law of X_targets given the observations, under f0 and under f1."""
    targets = _validate_targets(ctx, targets)
    border = {}
    for t in targets:
        for node, value in ctx.residual_piece(t).boundary:
            border[node] = value
    observed = sorted(border.items())
    return ctx.pair.f0.conditional(targets, observed), ctx.pair.f1.conditional(targets, observed)


def _check_variances(*variances) -> None:
    for v in variances:
        if np.any(np.asarray(v) < VARIANCE_FLOOR):
            raise SingularityError(f"Conditional variance below {VARIANCE_FLOOR}")


def scalar_kl(mean0, var0, mean1, var1):
    """KL(N(mean0, var0) || N(mean1, var1)), elementwise over arrays."""
    _check_variances(var0, var1)
    kl = 0.5 * (var0 / var1 + np.square(mean1 - mean0) / var1 - 1.0 + np.log(var1 / var0))
    return np.maximum(kl, 0.0)


def batched_kl(mean0: np.ndarray, cov0: np.ndarray, mean1: np.ndarray, cov1: np.ndarray) -> np.ndarray:
    """KL for stacks of small Gaussians: means (k, d), covariances (k, d, d)."""
    d = mean0.shape[-1]
    _check_variances(np.diagonal(cov0, axis1=1, axis2=2), np.diagonal(cov1, axis1=1, axis2=2))
    sign0, logdet0 = np.linalg.slogdet(cov0)
    sign1, logdet1 = np.linalg.slogdet(cov1)
    if np.any(sign0 <= 0) or np.any(sign1 <= 0):
        raise SingularityError("Conditional covariance block is not positive definite")
    diff = mean1 - mean0
    trace = np.trace(np.linalg.solve(cov1, cov0), axis1=1, axis2=2)
    maha = np.einsum("ki,ki->k", diff, np.linalg.solve(cov1, diff[..., None])[..., 0])
    return np.maximum(0.5 * (trace + maha - d + logdet1 - logdet0), 0.0)


def gaussian_kl(mean0, cov0, mean1, cov1) -> float:
    """
    Closed-form KL(N(mean0, cov0) || N(mean1, cov1)) through Cholesky factors.
    Never negative; degenerate variances raise SingularityError.
    """
    mean0 = np.atleast_1d(np.asarray(mean0, dtype=float))
    mean1 = np.atleast_1d(np.asarray(mean1, dtype=float))
    cov0 = np.atleast_2d(np.asarray(cov0, dtype=float))
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    k = mean0.shape[0]
    if k == 1:
        return float(scalar_kl(mean0[0], cov0[0, 0], mean1[0], cov1[0, 0]))
    _check_variances(np.diag(cov0), np.diag(cov1))
    try:
        chol0 = linalg.cholesky(cov0, lower=True)
        factor1 = linalg.cho_factor(cov1, lower=True)
    except linalg.LinAlgError:
        raise SingularityError("Conditional covariance is not positive definite")
    diff = mean1 - mean0
    trace = np.trace(linalg.cho_solve(factor1, cov0))
    maha = diff @ linalg.cho_solve(factor1, diff)
    logdet0 = 2 * np.sum(np.log(np.diag(chol0)))
    logdet1 = 2 * np.sum(np.log(np.diag(factor1[0])))
    return max(0.0, float(0.5 * (trace + maha - k + logdet1 - logdet0)))


def conditional_kl(ctx: MeasureContext, direction: int, targets: Sequence[int]) -> float:
    """
    J_direction(S) = KL(f_direction(X_S | observations) || f_other(X_S | observations)).
    """
    c0, c1 = conditional_pair(ctx, targets)
    first, second = (c1, c0) if int(direction) == 1 else (c0, c1)
    return gaussian_kl(first.mean, first.cov, second.mean, second.cov)


def chernoff_measure(ctx: MeasureContext, direction: int, node: int) -> float:
    if ctx.is_observed(node):
        raise InvalidInputError(f"Node {node} is already observed")
    return conditional_kl(ctx, direction, [node])


def m_measure(ctx: MeasureContext, direction: int, node: int, subset: Sequence[int]) -> float:
    """Information of sampling the whole subset S next; S must contain `node`."""
    subset = list(subset)
    if node not in subset:
        raise InvalidInputError(f"Node {node} is not in the candidate subset {subset}")
    return conditional_kl(ctx, direction, subset)


def expected_conditional_kl(ctx: MeasureContext, direction: int, given: int, targets: Sequence[int]) -> float:
    """
    E over X_given ~ f_direction of the KL between the laws of X_targets given X_given and the
    observations. This is the future-information term of the chain rule
        J(S) = J({i}) + E[J(S \\ {i} | X_i)].
    """
    targets = list(targets)
    if given in targets:
        raise InvalidInputError(f"Node {given} cannot be both given and a target")
    c0, c1 = conditional_pair(ctx, [given] + targets)

    def split(c):
        v = c.cov[0, 0]
        b = c.cov[1:, 0] / v
        return c.mean[0], v, c.mean[1:], b, c.cov[1:, 1:] - np.outer(c.cov[1:, 0], c.cov[0, 1:]) / v

    ell = int(direction)
    a_l, v_l, mu_l, b_l, cov_l = split(c1 if ell == 1 else c0)
    a_o, _, mu_o, b_o, cov_o = split(c0 if ell == 1 else c1)
    _check_variances(np.diag(cov_l), np.diag(cov_o))

    # conditional means evaluated at x = a_l; the spread of X_given adds the slope term
    base = gaussian_kl(mu_l, cov_l, mu_o + b_o * (a_l - a_o), cov_o)
    slope = b_l - b_o
    try:
        factor = linalg.cho_factor(cov_o, lower=True)
    except linalg.LinAlgError:
        raise SingularityError("Conditional covariance is not positive definite")
    return base + 0.5 * v_l * float(slope @ linalg.cho_solve(factor, slope))


class PieceConditionals:
    """
    Conditionals of every node of one residual piece under both models, given the piece border.
    Used by the policies to score a whole piece with a handful of vectorised solves.
    """

    def __init__(self, ctx: MeasureContext, piece: ResidualPiece):
        self.pair = ctx.pair
        self.piece = piece
        self.nodes = np.asarray(piece.nodes, dtype=int)
        self.index = {node: k for k, node in enumerate(piece.nodes)}
        border_nodes = np.asarray([b for b, _ in piece.boundary], dtype=int)
        border_values = np.asarray([y for _, y in piece.boundary], dtype=float)
        self._parts = tuple(self._condition(model, border_nodes, border_values) for model in (ctx.pair.f0, ctx.pair.f1))

    def _condition(self, model, border_nodes, border_values):
        T = self.nodes
        if border_nodes.size == 0:
            return model.mean[T].copy(), np.diag(model.covariance)[T].copy(), None, None
        cov_bt = model.covariance[np.ix_(border_nodes, T)]
        try:
            factor = linalg.cho_factor(model.covariance[np.ix_(border_nodes, border_nodes)], lower=True)
        except linalg.LinAlgError:
            raise SingularityError("Observed covariance block is singular")
        gain = linalg.cho_solve(factor, cov_bt)
        mean = model.mean[T] + gain.T @ (border_values - model.mean[border_nodes])
        var = np.diag(model.covariance)[T] - np.sum(cov_bt * gain, axis=0)
        return mean, var, cov_bt, gain

    def mean(self, h: int) -> np.ndarray:
        return self._parts[h][0]

    def var(self, h: int) -> np.ndarray:
        return self._parts[h][1]

    def cov(self, h: int, a, b) -> np.ndarray:
        """Conditional covariances between piece positions a[k] and b[k]."""
        a, b = np.asarray(a, dtype=int), np.asarray(b, dtype=int)
        _, _, cov_bt, gain = self._parts[h]
        base = self.pair.model(h).covariance[self.nodes[a], self.nodes[b]]
        if cov_bt is None:
            return base
        return base - np.sum(cov_bt[:, a] * gain[:, b], axis=0)

    def block(self, h: int, positions) -> GaussianConditional:
        positions = np.asarray(positions, dtype=int)
        rows, cols = np.meshgrid(positions, positions, indexing="ij")
        cov = self.cov(h, rows.ravel(), cols.ravel()).reshape(rows.shape)
        return GaussianConditional(self.mean(h)[positions], (cov + cov.T) / 2)

    def node_kl(self, direction: int) -> np.ndarray:
        """D_direction for every node of the piece, in piece order."""
        first, second = (1, 0) if int(direction) == 1 else (0, 1)
        return scalar_kl(self.mean(first), self.var(first), self.mean(second), self.var(second))

    def pair_kl(self, direction: int, a, b) -> np.ndarray:
        """J_direction({i, j}) for piece position pairs (a[k], b[k])."""
        a, b = np.asarray(a, dtype=int), np.asarray(b, dtype=int)
        if a.size == 0:
            return np.zeros(0)
        first, second = (1, 0) if int(direction) == 1 else (0, 1)

        def stack(h):
            mean = np.stack([self.mean(h)[a], self.mean(h)[b]], axis=1)
            off = self.cov(h, a, b)
            cov = np.empty((a.size, 2, 2))
            cov[:, 0, 0] = self.var(h)[a]
            cov[:, 1, 1] = self.var(h)[b]
            cov[:, 0, 1] = cov[:, 1, 0] = off
            return mean, cov

        m0, c0 = stack(first)
        m1, c1 = stack(second)
        return batched_kl(m0, c0, m1, c1)

    def subset_kl(self, direction: int, positions) -> float:
        first, second = (1, 0) if int(direction) == 1 else (0, 1)
        p = self.block(first, positions)
        q = self.block(second, positions)
        return gaussian_kl(p.mean, p.cov, q.mean, q.cov)


def neighbor_future_terms(sigma: float) -> tuple[float, float]:
    """
    Per-neighbour future terms (J_0, J_1) of the tree chain rule for unit-variance independence
    tests: E[KL] of a neighbour's conditional law given the candidate, with correlation sigma.
    """
    if not abs(sigma) < 1:
        raise InvalidInputError(f"Correlation must satisfy |rho| < 1, got {sigma}")
    s2 = sigma ** 2
    j0 = 0.5 * (np.log(1 - s2) + 2 * s2 / (1 - s2))
    j1 = 0.5 * np.log(1 / (1 - s2))
    return float(j0), float(j1)


def chernoff_closed_form(sigma: float, y: float, direction: int, printed: bool = False) -> float:
    """
    D measure of a unit-variance node with a single observed neighbour at (centred) value y.

    `printed=True` evaluates the published D_1 display, whose quadratic term carries an extra
    1/(1 - sigma^2) factor; the default is the exact univariate KL.
    """
    if not abs(sigma) < 1:
        raise InvalidInputError(f"Correlation must satisfy |rho| < 1, got {sigma}")
    s2 = sigma ** 2
    if int(direction) == 0:
        return float(0.5 * (np.log(1 - s2) + s2 * (y * y + 1) / (1 - s2)))
    quadratic = s2 / (1 - s2) if printed else s2
    return float(0.5 * (np.log(1 / (1 - s2)) + quadratic * (y * y - 1)))


@dataclass(frozen=True)
class ClosedFormMeasures:
    j0: float
    j1: float
    exact: bool


def gmrf_closed_form_measures(ctx: MeasureContext, node: int, printed: bool = False) -> ClosedFormMeasures:
    """
    Single-node measures (J_0, J_1) from correlation coefficients alone.

    Applies to unit-variance tests against independence on acyclic graphs. With at most one
    observed neighbour in the evolved graph the closed form is exact; otherwise, or when the
    preconditions fail, the generic conditional KL is returned.
    """
    if ctx.is_observed(node):
        raise InvalidInputError(f"Node {node} is already observed")
    pair = ctx.pair
    if not (is_unit_independence_test(pair) and is_acyclic(pair.union_graph)):
        logger.debug(f"Closed form unavailable for node {node}; using conditional KL")
        return ClosedFormMeasures(
            conditional_kl(ctx, 0, [node]), conditional_kl(ctx, 1, [node]), exact=True,
        )

    neighbours = ctx.evolved_neighbors(node)
    if not neighbours:
        return ClosedFormMeasures(0.0, 0.0, exact=True)
    if len(neighbours) > 1:
        return ClosedFormMeasures(
            conditional_kl(ctx, 0, [node]), conditional_kl(ctx, 1, [node]), exact=True,
        )

    (j, value), = neighbours
    sigma = pair.f1.covariance[node, j]
    centred = value - pair.f1.mean[j]
    return ClosedFormMeasures(
        chernoff_closed_form(sigma, centred, 0),
        chernoff_closed_form(sigma, centred, 1, printed=printed),
        exact=not printed,
    )
