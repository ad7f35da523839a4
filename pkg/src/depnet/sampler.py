"""Pseudo-Gibbs sampling, plain and clamped.

Random numbers come from numpy's PCG64 generator seeded with the run seed.
The draw order is fixed: ``n`` uniforms for the initial state (``x_i =
floor(u |X_i|)``, drawn even when an explicit initial state or a clamp
overrides them), then two uniforms per step, the first selecting the node
(ignored under sequential scan) and the second drawing the new value by
inverse CDF over the table row in index order.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import DomainError
from .geometry import check_weights
from .network import evaluate_source
from .state_space import DENSE_CAP, DenseDistribution, VariableSpace

_CHUNK = 1 << 16


@dataclass(frozen=True)
class RandomScan:
    """Select node ``i`` with probability ``weights[i]`` (network weights if None)."""

    weights: tuple[float, ...] | None = None


@dataclass(frozen=True)
class SequentialScan:
    """Cycle through ``order`` (node index order if None)."""

    order: tuple[int, ...] | None = None


ScanPolicy = Union[RandomScan, SequentialScan]


@dataclass(frozen=True, eq=False)
class SampleRun:
    """Recorded states ``X^t`` (before each update) and the node updated at ``t``."""

    space: VariableSpace
    states: np.ndarray
    nodes: np.ndarray
    seed: int
    policy: ScanPolicy
    clamp: tuple[tuple[int, int], ...] = ()

    def __len__(self) -> int:
        return self.states.shape[0]


def _cumulative(row: np.ndarray) -> list[float]:
    cum = np.cumsum(row)
    last = int(np.flatnonzero(row > 0)[-1])
    cum[last:] = 1.0
    return cum.tolist()


def _initial_state(space, rng, init, clamp):
    draws = rng.random(space.n)
    if isinstance(init, str):
        if init != "uniform-random":
            raise DomainError(f"unknown init {init!r}")
        state = [min(int(u * c), c - 1) for u, c in zip(draws, space.cardinalities)]
    else:
        state = [int(v) for v in init]
        if len(state) != space.n or any(
            not 0 <= v < c for v, c in zip(state, space.cardinalities)
        ):
            raise DomainError(f"initial state {init!r} invalid for the space")
    for i, v in clamp.items():
        state[i] = v
    return state


def _check_clamp(space: VariableSpace, clamp: Mapping[int, int]) -> dict[int, int]:
    out = {}
    for k, v in dict(clamp).items():
        k, v = int(k), int(v)
        if not 0 <= k < space.n:
            raise DomainError(f"clamped variable {k} out of range")
        if not 0 <= v < space.cardinalities[k]:
            raise DomainError(f"clamped value {v} out of range for variable {k}")
        out[k] = v
    if len(out) >= space.n:
        raise DomainError("cannot clamp every variable")
    return out


def conditional_pseudo_gibbs(
    network,
    clamp: Mapping[int, int],
    policy: ScanPolicy = RandomScan(),
    n_steps: int = 1000,
    seed: int = 0,
    init: Union[str, Sequence[int]] = "uniform-random",
) -> SampleRun:
    """Pseudo-Gibbs sampling with the variables in ``clamp`` held fixed.

    Under random scan the unclamped nodes keep their relative weights,
    renormalized to sum to one; under sequential scan clamped nodes are
    dropped from the order.
    """
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    space = network.space
    clamp = _check_clamp(space, clamp)
    free = [i for i in range(space.n) if i not in clamp]

    if isinstance(policy, RandomScan):
        w = network.weights if policy.weights is None else check_weights(policy.weights, space.n)
        if clamp:
            w = np.array([w[i] if i not in clamp else 0.0 for i in range(space.n)])
            if w.sum() <= 0:
                raise DomainError("every unclamped node has zero scan weight")
            w = w / w.sum()
        select_cum = _cumulative(np.asarray(w))
        cycle = None
    elif isinstance(policy, SequentialScan):
        order = list(range(space.n)) if policy.order is None else [int(i) for i in policy.order]
        if sorted(order) != list(range(space.n)):
            raise DomainError("sequential order must be a permutation of the nodes")
        cycle = [i for i in order if i not in clamp]
        select_cum = None
    else:
        raise DomainError(f"unknown scan policy {policy!r}")

    rng = np.random.Generator(np.random.PCG64(seed))
    state = _initial_state(space, rng, init, clamp)
    cums = [[_cumulative(row) for row in node.table.rows] for node in network.nodes]

    dense = space.total_states <= DENSE_CAP
    if dense:
        leaf_maps = [network.leaf_map(i).tolist() for i in range(space.n)]
        strides = space.strides.tolist()
        code = sum(v * s for v, s in zip(state, strides))
        codes = np.empty(n_steps, dtype=np.int64)
    else:
        sources = [node.source for node in network.nodes]
        states = np.empty((n_steps, space.n), dtype=np.int64)
    nodes = np.empty(n_steps, dtype=np.int64)

    t = 0
    while t < n_steps:
        block = rng.random((min(_CHUNK, n_steps - t), 2)).tolist()
        for u_select, u_value in block:
            if cycle is None:
                i = bisect_right(select_cum, u_select)
            else:
                i = cycle[t % len(cycle)]
            nodes[t] = i
            if dense:
                codes[t] = code
                y = leaf_maps[i][code]
            else:
                states[t] = state
                y = evaluate_source(sources[i], state)
            v = bisect_right(cums[i][y], u_value)
            if dense:
                code += (v - state[i]) * strides[i]
            state[i] = v
            t += 1

    if dense:
        states = (codes[:, None] // space.strides[None, :]) % np.asarray(space.cardinalities)
    states.setflags(write=False)
    nodes.setflags(write=False)
    return SampleRun(space, states, nodes, seed, policy, tuple(sorted(clamp.items())))


def pseudo_gibbs(
    network,
    policy: ScanPolicy = RandomScan(),
    n_steps: int = 1000,
    seed: int = 0,
    init: Union[str, Sequence[int]] = "uniform-random",
) -> SampleRun:
    """Run pseudo-Gibbs sampling for ``n_steps`` recorded states."""
    return conditional_pseudo_gibbs(network, {}, policy, n_steps, seed, init)


def frequencies(run: SampleRun) -> DenseDistribution:
    """Visit frequencies ``N_x / N`` of the recorded states."""
    if len(run) == 0:
        raise DomainError("empty run")
    counts = np.bincount(run.space.encode_many(run.states), minlength=run.space.total_states)
    return DenseDistribution(run.space, counts / len(run))
