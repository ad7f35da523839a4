"""Divergences and full-conditional manifolds.

All quantities are in nats. ``0 log 0`` is taken as 0, and a divergence is
``math.inf`` whenever its first argument puts mass where the second puts
none. The manifold ``E(theta_i)`` is the set of joints whose full
conditional at node ``i`` equals ``theta_i``; a ``(theta, source)`` pair
describes it, with ``theta`` a :class:`~depnet.network.ConditionalTable`
and ``source`` the matching :class:`~depnet.network.InformationSource`.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError
from .state_space import PROB_TOL, DenseDistribution, axis_of


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def check_weights(weights, n: int) -> np.ndarray:
    """Validate random-scan selection probabilities ``c_i``."""
    c = np.array(weights, dtype=np.float64).ravel()
    if c.shape != (n,):
        raise DomainError(f"expected {n} scan weights, got {c.size}")
    if not np.all(np.isfinite(c)) or c.min() < 0:
        raise DomainError("scan weights must be finite and non-negative")
    if abs(c.sum() - 1.0) > PROB_TOL:
        raise DomainError(f"scan weights sum to {c.sum()!r}, not 1")
    c.setflags(write=False)
    return c


def _same_space(p: DenseDistribution, q: DenseDistribution) -> None:
    if p.space.cardinalities != q.space.cardinalities:
        raise DomainError("distributions live on different spaces")


def context_mass(p: DenseDistribution, i: int) -> np.ndarray:
    """``p(x_{-i})`` broadcast back to every flat state."""
    axis = axis_of(p.space, i)
    ctx = p.tensor.sum(axis=axis, keepdims=True)
    return np.broadcast_to(ctx, p.space.shape).ravel()


def full_conditional(p: DenseDistribution, i: int) -> np.ndarray:
    """``p(x_i | x_{-i})`` at every flat state; 0 where the context has no mass."""
    ctx = context_mass(p, i)
    out = np.zeros_like(p.probs)
    np.divide(p.probs, ctx, out=out, where=ctx > 0)
    return out


def manifold_kernel(p_space, i: int, theta, source) -> np.ndarray:
    """``theta_i(x_i | y_i(x))`` at every flat state."""
    states = p_space.all_states()
    if theta.rows.shape != (source.leaf_count, p_space.cardinalities[i]):
        raise DomainError("table shape does not match the source and variable")
    return theta.rows[source.leaf_map(states), states[:, i]]


def entropy(p: DenseDistribution) -> float:
    nz = p.probs[p.probs > 0]
    return float(-(nz * np.log(nz)).sum())


def conditional_entropy(p: DenseDistribution, target: int, source=None) -> float:
    """``H(p(X_i | Y))`` with ``Y`` given by ``source``, or all other
    variables when ``source`` is None."""
    if source is None:
        cond = full_conditional(p, target)
        mask = p.probs > 0
        return float(-(p.probs[mask] * np.log(cond[mask])).sum())
    card = p.space.cardinalities[target]
    states = p.space.all_states()
    keys = source.leaf_map(states) * card + states[:, target]
    joint = np.bincount(keys, weights=p.probs, minlength=source.leaf_count * card)
    joint = joint.reshape(source.leaf_count, card)
    leaf = joint.sum(axis=1, keepdims=True)
    mask = joint > 0
    ratio = joint[mask] / np.broadcast_to(leaf, joint.shape)[mask]
    return float(-(joint[mask] * np.log(ratio)).sum())


def kl_divergence(p: DenseDistribution, q: DenseDistribution) -> float:
    _same_space(p, q)
    mask = p.probs > 0
    if np.any(q.probs[mask] == 0):
        return math.inf
    return max(float((p.probs[mask] * np.log(p.probs[mask] / q.probs[mask])).sum()), 0.0)


def m_project(p: DenseDistribution, i: int, theta, source) -> DenseDistribution:
    """Project ``p`` onto ``E(theta_i)``: keep ``p(X_{-i})``, swap in ``theta_i``."""
    kernel = manifold_kernel(p.space, i, theta, source)
    return DenseDistribution(p.space, context_mass(p, i) * kernel)


def kl_to_full_conditional_manifold(p: DenseDistribution, i: int, theta, source) -> float:
    """``KL(p || E(theta_i)) = <log p(X_i|X_{-i}) / theta_i(X_i|Y_i)>_p``."""
    kernel = manifold_kernel(p.space, i, theta, source)
    cond = full_conditional(p, i)
    mask = p.probs > 0
    if np.any(kernel[mask] == 0):
        return math.inf
    return max(float((p.probs[mask] * np.log(cond[mask] / kernel[mask])).sum()), 0.0)


def _node_fc_terms(p: DenseDistribution, q: DenseDistribution, i: int) -> float:
    mask = p.probs > 0
    qc = full_conditional(q, i)
    if np.any(qc[mask] == 0):
        return math.inf
    pc = full_conditional(p, i)
    return float((p.probs[mask] * np.log(pc[mask] / qc[mask])).sum())


def fc_divergence(p: DenseDistribution, q: DenseDistribution, weights=None) -> float:
    """Full conditional divergence ``sum_i c_i KL(p || E_i(q))``.

    A context with ``q(x_{-i}) = 0`` leaves ``q``'s conditional undefined;
    it costs nothing if ``p`` also ignores it and is infinite otherwise.
    """
    _same_space(p, q)
    c = uniform_weights(p.space.n) if weights is None else check_weights(weights, p.space.n)
    total = 0.0
    for i in range(p.space.n):
        if c[i] == 0:
            continue
        term = _node_fc_terms(p, q, i)
        if math.isinf(term):
            return math.inf
        total += c[i] * max(term, 0.0)
    return total


def pseudo_log_likelihood(p: DenseDistribution, q: DenseDistribution, weights=None) -> float:
    """``<sum_i c_i log q(X_i | X_{-i})>_p`` (``-inf`` if undefined on ``p``'s support)."""
    _same_space(p, q)
    c = uniform_weights(p.space.n) if weights is None else check_weights(weights, p.space.n)
    mask = p.probs > 0
    total = 0.0
    for i in range(p.space.n):
        if c[i] == 0:
            continue
        qc = full_conditional(q, i)[mask]
        if np.any(qc == 0):
            return -math.inf
        total += c[i] * float((p.probs[mask] * np.log(qc)).sum())
    return total


def fc_limit(p: DenseDistribution, network) -> float:
    """``sum_i c_i KL(p || E(theta_i))`` for the network's tables."""
    if p.space.cardinalities != network.space.cardinalities:
        raise DomainError("distribution and network live on different spaces")
    total = 0.0
    for i, node in enumerate(network.nodes):
        c = network.weights[i]
        if c == 0:
            continue
        kl = kl_to_full_conditional_manifold(p, i, node.table, node.source)
        if math.isinf(kl):
            return math.inf
        total += c * kl
    return total


def per_node_manifold_kl(p: DenseDistribution, network) -> list[float]:
    return [
        kl_to_full_conditional_manifold(p, i, node.table, node.source)
        for i, node in enumerate(network.nodes)
    ]


def manifold_kl_from_data(data, i: int, theta, source) -> float:
    """``KL(p^D || E(theta_i))`` straight from samples, without a dense joint."""
    rows, counts = data.unique_counts()
    others = [j for j in range(data.space.n) if j != i]
    _, context = np.unique(rows[:, others], axis=0, return_inverse=True)
    context = context.ravel()
    ctx_total = np.bincount(context, weights=counts)
    cond = counts / ctx_total[context]
    th = theta.rows[source.leaf_map(rows), rows[:, i]]
    if np.any(th == 0):
        return math.inf
    return max(float((counts * np.log(cond / th)).sum() / data.N), 0.0)


def clamped_decomposition(p: DenseDistribution, i: int, theta, source, clamp_vars) -> list[tuple[tuple[int, ...], float, float]]:
    """Terms of ``KL(p || E(theta_i))`` split by the values of clamped variables.

    Returns ``(x_C, p(x_C), KL(p(X_free | x_C) || E(theta_i(. | . ; x_C))))``
    for every clamped assignment with positive mass; the weighted sum of the
    KL terms recovers the unclamped divergence.
    """
    clamp_vars = sorted(set(int(c) for c in clamp_vars))
    if i in clamp_vars:
        raise DomainError("the node must be unclamped")
    free = [j for j in range(p.space.n) if j not in clamp_vars]
    sub = p.space.subspace(free)
    i_sub = free.index(i)
    kernel = manifold_kernel(p.space, i, theta, source).reshape(p.space.shape)
    terms = []
    for x_c in p.space.subspace(clamp_vars).all_states():
        index = [slice(None)] * p.space.n
        for var, value in zip(clamp_vars, x_c):
            index[axis_of(p.space, var)] = int(value)
        index = tuple(index)
        block = p.tensor[index]
        weight = float(block.sum())
        if weight <= 0:
            continue
        cond = DenseDistribution.normalize(sub, block.ravel())
        k = np.ascontiguousarray(kernel[index]).ravel()
        fc = full_conditional(cond, i_sub)
        mask = cond.probs > 0
        if np.any(k[mask] == 0):
            kl = math.inf
        else:
            kl = float((cond.probs[mask] * np.log(fc[mask] / k[mask])).sum())
        terms.append((tuple(int(v) for v in x_c), weight, kl))
    return terms
