"""Exact stationary distributions of pseudo-Gibbs chains on dense spaces.

Updating node ``i`` maps a distribution ``p`` to ``p(X_{-i}) theta_i(X_i|Y_i)``,
so applying a node operator never needs the ``|X| x |X|`` matrix: it is a
marginalization over one tensor axis followed by a pointwise product with
the node's kernel. Sparse matrices are only assembled for the direct solve.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, LinAlgWarning, lu_factor, lu_solve
from scipy.sparse.linalg import MatrixRankWarning, splu

from .errors import ConvergenceError, DegeneracyError, DomainError
from .geometry import check_weights, fc_divergence, fc_limit, kl_divergence, per_node_manifold_kl
from .state_space import DenseDistribution, VariableSpace, axis_of

RESIDUAL_TOL = 1e-10
DIRECT_LIMIT = 4096
SEQUENTIAL_DIRECT_LIMIT = 1024


@dataclass(frozen=True, eq=False)
class _Chain:
    """Single-site chain: a kernel per updatable node on a dense space."""

    space: VariableSpace
    nodes: tuple[int, ...]
    kernels: tuple[np.ndarray, ...]
    weights: np.ndarray

    def apply_node(self, probs: np.ndarray, k: int) -> np.ndarray:
        axis = axis_of(self.space, self.nodes[k])
        ctx = probs.reshape(self.space.shape).sum(axis=axis, keepdims=True)
        return (np.broadcast_to(ctx, self.space.shape).ravel() * self.kernels[k])

    def apply(self, probs: np.ndarray) -> np.ndarray:
        out = np.zeros_like(probs)
        for k, c in enumerate(self.weights):
            if c:
                out += c * self.apply_node(probs, k)
        return out

    def node_matrix(self, k: int) -> sp.csr_matrix:
        i = self.nodes[k]
        states = self.space.all_states()
        stride = int(self.space.strides[i])
        size = self.space.total_states
        rows, cols, vals = [], [], []
        base = np.arange(size, dtype=np.int64)
        for v in range(self.space.cardinalities[i]):
            target = base + (v - states[:, i]) * stride
            rows.append(base)
            cols.append(target)
            vals.append(self.kernels[k][target])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(size, size),
        )

    def matrix(self) -> sp.csr_matrix:
        size = self.space.total_states
        total = sp.csr_matrix((size, size))
        for k, c in enumerate(self.weights):
            if c:
                total = total + c * self.node_matrix(k)
        return total.tocsr()


def _network_chain(network, weights=None) -> _Chain:
    network.space.check_dense()
    w = network.weights if weights is None else check_weights(weights, network.n)
    return _Chain(
        network.space,
        tuple(range(network.n)),
        tuple(network.kernel(i) for i in range(network.n)),
        np.asarray(w),
    )


def _clamped_chain(network, clamp: Mapping[int, int]) -> _Chain:
    clamp = _check_clamp(network.space, clamp)
    free = [i for i in range(network.n) if i not in clamp]
    index = [slice(None)] * network.n
    for i, v in clamp.items():
        index[axis_of(network.space, i)] = v
    index = tuple(index)
    sub = network.space.subspace(free)
    kernels = tuple(
        np.ascontiguousarray(network.kernel(i).reshape(network.space.shape)[index]).ravel()
        for i in free
    )
    w = np.array([network.weights[i] for i in free], dtype=float)
    if w.sum() <= 0:
        raise DomainError("every unclamped node has zero scan weight")
    return _Chain(sub, tuple(range(len(free))), kernels, w / w.sum())


def _check_clamp(space: VariableSpace, clamp: Mapping[int, int]) -> dict[int, int]:
    clamp = {int(k): int(v) for k, v in dict(clamp).items()}
    for i, v in clamp.items():
        if not 0 <= i < space.n:
            raise DomainError(f"clamped variable {i} out of range")
        if not 0 <= v < space.cardinalities[i]:
            raise DomainError(f"clamped value {v} out of range for variable {i}")
    if len(clamp) >= space.n:
        raise DomainError("at least one variable must stay unclamped")
    return clamp


class NodeOperator:
    """Transition of a single update of node ``i``."""

    def __init__(self, network, i: int):
        if not 0 <= i < network.n:
            raise DomainError(f"node {i} out of range")
        self.network = network
        self.i = i
        self._chain = _Chain(network.space, (i,), (network.kernel(i),), np.ones(1))

    def apply(self, p: DenseDistribution) -> DenseDistribution:
        return DenseDistribution(p.space, self._chain.apply_node(p.probs, 0))

    def matrix(self) -> sp.csr_matrix:
        return self._chain.node_matrix(0)


class TransitionOperator:
    """Random-scan transition ``T = sum_i c_i T_i``."""

    def __init__(self, network, weights=None):
        self.network = network
        self._chain = _network_chain(network, weights)

    @property
    def weights(self) -> np.ndarray:
        return self._chain.weights

    def apply(self, p: DenseDistribution) -> DenseDistribution:
        return DenseDistribution(p.space, self._chain.apply(p.probs))

    def matrix(self) -> sp.csr_matrix:
        return self._chain.matrix()

    def residual(self, p: DenseDistribution) -> float:
        return float(np.abs(self._chain.apply(p.probs) - p.probs).sum())


def node_operator(network, i: int) -> NodeOperator:
    network.space.check_dense()
    return NodeOperator(network, i)


def transition_operator(network, weights=None) -> TransitionOperator:
    return TransitionOperator(network, weights)


def _solve_direct(matrix: sp.spmatrix) -> np.ndarray:
    """Solve ``pi (T - I) = 0`` with the last equation replaced by ``sum pi = 1``.

    Dense LU up to ``DIRECT_LIMIT`` states, sparse LU above; two rounds of
    iterative refinement either way.
    """
    size = matrix.shape[0]
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        warnings.simplefilter("error", LinAlgWarning)
        try:
            if size <= DIRECT_LIMIT:
                system = matrix.T.toarray() - np.eye(size)
                system[-1, :] = 1.0
                factors = lu_factor(system, check_finite=False)
                solve = partial(lu_solve, factors)
            else:
                system = (matrix.T - sp.identity(size, format="csr")).tolil()
                system[size - 1, :] = np.ones(size)
                system = system.tocsc()
                solve = splu(system).solve
        except (RuntimeError, MatrixRankWarning, LinAlgWarning, LinAlgError) as exc:
            raise DegeneracyError(f"transition matrix is reducible: {exc}") from None
    pi = solve(rhs)
    for _ in range(2):
        pi = pi + solve(rhs - system @ pi)
    if not np.all(np.isfinite(pi)):
        raise DegeneracyError("stationary solve produced non-finite values")
    return pi


def _finish(pi: np.ndarray, what: str) -> np.ndarray:
    if pi.min() < -1e-8:
        raise DegeneracyError(f"{what}: stationary vector has negative mass {pi.min():.3g}")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _power(step, start: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    pi = start
    residual = math.inf
    for _ in range(max_iter):
        nxt = step(pi)
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt / nxt.sum()
        if residual <= tol:
            return pi
    raise ConvergenceError(
        f"power iteration did not reach residual {tol:g} in {max_iter} steps "
        f"(last residual {residual:.3g})",
        residual=residual,
    )


def _stationary(chain: _Chain, method: str, tol: float, max_iter: int) -> np.ndarray:
    if method == "auto":
        method = "direct" if chain.space.total_states <= DIRECT_LIMIT else "power"
    if method == "direct":
        pi = _finish(_solve_direct(chain.matrix()), "direct solve")
    elif method == "power":
        start = np.full(chain.space.total_states, 1.0 / chain.space.total_states)
        pi = _finish(_power(chain.apply, start, tol, max_iter), "power iteration")
    else:
        raise DomainError(f"unknown method {method!r}")
    residual = float(np.abs(chain.apply(pi) - pi).sum())
    if residual > max(RESIDUAL_TOL, tol):
        if method == "direct":
            pi = _finish(_power(chain.apply, pi, tol, max_iter), "power polish")
        else:
            raise ConvergenceError(f"stationary residual {residual:.3g} too large", residual)
    return pi


def stationary_random_scan(
    network, method: str = "auto", tol: float = 1e-12, max_iter: int = 10**6
) -> DenseDistribution:
    """Stationary distribution of the random-scan chain.

    ``method`` is ``"direct"`` (LU with the normalization row; dense up to
    4096 states, sparse above),
    ``"power"`` (iterate ``p <- p T`` until the L1 residual is below
    ``tol``) or ``"auto"`` (direct up to 4096 states).
    """
    chain = _network_chain(network)
    return DenseDistribution(network.space, _stationary(chain, method, tol, max_iter))


def conditional_stationary(
    network, clamp: Mapping[int, int], method: str = "auto", tol: float = 1e-12, max_iter: int = 10**6
) -> DenseDistribution:
    """Stationary distribution of clamped random-scan sampling.

    The chain runs over the unclamped variables with the clamped values
    held fixed; the result is embedded in the full space, so all its mass
    sits on the clamped slice.
    """
    network.space.check_dense()
    chain = _clamped_chain(network, clamp)
    reduced = _stationary(chain, method, tol, max_iter)
    full = np.zeros(network.space.shape)
    index = [slice(None)] * network.n
    for i, v in _check_clamp(network.space, clamp).items():
        index[axis_of(network.space, i)] = v
    full[tuple(index)] = reduced.reshape(chain.space.shape)
    return DenseDistribution(network.space, full.ravel())


@dataclass(frozen=True)
class SequentialStationary:
    phases: tuple[DenseDistribution, ...]
    order: tuple[int, ...]

    @property
    def mean(self) -> DenseDistribution:
        probs = np.mean([p.probs for p in self.phases], axis=0)
        return DenseDistribution.normalize(self.phases[0].space, probs)


def stationary_sequential_scan(
    network, order: Sequence[int] | None = None, method: str = "auto",
    tol: float = 1e-12, max_iter: int = 10**6,
) -> SequentialStationary:
    """Phase stationaries of sequential scan.

    ``phases[0]`` is stationary for one full cycle ``T_{o0} T_{o1} ...``
    and ``phases[r + 1] = phases[r] T_{order[r]}``. The model distribution
    is their mean (``.mean``).
    """
    network.space.check_dense()
    order = tuple(range(network.n)) if order is None else tuple(int(i) for i in order)
    if sorted(order) != list(range(network.n)):
        raise DomainError("sequential order must be a permutation of the nodes")
    chain = _Chain(
        network.space, order, tuple(network.kernel(i) for i in order), np.ones(len(order))
    )

    def cycle(probs):
        for k in range(len(order)):
            probs = chain.apply_node(probs, k)
        return probs

    if method == "auto":
        method = "direct" if network.space.total_states <= SEQUENTIAL_DIRECT_LIMIT else "power"
    if method == "direct":
        product = chain.node_matrix(0)
        for k in range(1, len(order)):
            product = (product @ chain.node_matrix(k)).tocsr()
        pi0 = _finish(_solve_direct(product), "sequential direct solve")
    elif method == "power":
        start = np.full(network.space.total_states, 1.0 / network.space.total_states)
        pi0 = _finish(_power(cycle, start, tol, max_iter), "sequential power iteration")
    else:
        raise DomainError(f"unknown method {method!r}")
    residual = float(np.abs(cycle(pi0) - pi0).sum())
    if residual > max(RESIDUAL_TOL, tol):
        raise DegeneracyError(f"cycle operator has no unique fixed point (residual {residual:.3g})")
    phases = [pi0]
    for k in range(len(order) - 1):
        phases.append(chain.apply_node(phases[-1], k))
    return SequentialStationary(
        tuple(DenseDistribution.normalize(network.space, ph) for ph in phases), order
    )


@dataclass(frozen=True)
class FCLimitReport:
    fc: float
    fc_limit: float
    kl: float
    per_node: tuple[float, ...] = field(default=())

    @property
    def slack(self) -> float:
        return self.fc_limit - self.fc

    def to_dict(self) -> dict:
        return {
            "fc": self.fc,
            "fc_limit": self.fc_limit,
            "slack": self.slack,
            "kl": self.kl,
            "per_node_kl": list(self.per_node),
        }


def verify_fc_limit(p: DenseDistribution, network, method: str = "auto", pi=None) -> FCLimitReport:
    """Compare ``FC(p || pi)`` against the FC-limit of ``p``."""
    if pi is None:
        pi = stationary_random_scan(network, method=method)
    return FCLimitReport(
        fc=fc_divergence(p, pi, network.weights),
        fc_limit=fc_limit(p, network),
        kl=kl_divergence(p, pi),
        per_node=tuple(per_node_manifold_kl(p, network)),
    )


def is_strictly_positive(network, eps: float = 0.0) -> bool:
    """Every table entry exceeds ``eps``: sufficient for an ergodic chain."""
    return all(node.table.rows.min() > eps for node in network.nodes)
