"""Per-node parameter and structure learning.

Each node minimizes its reduced cost ``H(p^D(X_i | Y_i)) + R(k_i, N)``
independently. The cost is a sum of leaf costs, so a split or merge changes
it by a quantity computable from the affected leaves alone; the greedy
learner applies the best such change until none lowers the cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from joblib import Parallel, delayed

from .errors import DomainError
from .network import (
    ConditionalTable,
    DependencyNetwork,
    InformationSource,
    Merge,
    Node,
    Split,
    apply_op,
)
from .state_space import Dataset

# Candidates must lower the cost by more than this to be accepted; it only
# guards against rounding noise on exact ties.
DELTA_TOL = 1e-12

Penalty = Union[str, Callable[[int, int], float], None]


def mdl_penalty(k: int, N: int) -> float:
    """``k log(N) / (2N)``: the MDL penalty per training sample."""
    if N < 1:
        raise DomainError("the MDL penalty needs N >= 1")
    if k < 0:
        raise DomainError("the number of parameters must be non-negative")
    return k * math.log(N) / (2 * N)


def _no_penalty(k: int, N: int) -> float:
    return 0.0


def resolve_penalty(penalty: Penalty) -> Callable[[int, int], float]:
    if penalty is None or penalty == "none":
        return _no_penalty
    if penalty == "mdl":
        return mdl_penalty
    if callable(penalty):
        return penalty
    raise DomainError(f"unknown penalty {penalty!r}")


@dataclass(frozen=True)
class LearnConfig:
    """Knobs for :func:`structure_learn_node` and :func:`learn_network`.

    ``sampling_smoothing`` is the additive count ``alpha_s`` used for the
    sampler-facing tables (``None`` means ``1 / N``). ``merge_candidate_cap``
    limits merge candidates to the first pairs in ``(y0, y1)`` order; 0
    gives a split-only tree learner, ``None`` no limit.
    """

    penalty: Penalty = "mdl"
    sampling_smoothing: float | None = None
    merge_candidate_cap: int | None = None

    def __post_init__(self):
        resolve_penalty(self.penalty)
        if self.sampling_smoothing is not None and self.sampling_smoothing < 0:
            raise DomainError("sampling smoothing must be >= 0")
        if self.merge_candidate_cap is not None and self.merge_candidate_cap < 0:
            raise DomainError("merge candidate cap must be >= 0")


@dataclass(frozen=True)
class LeafStats:
    y: int
    counts: np.ndarray

    @property
    def N_y(self) -> float:
        return float(self.counts.sum())


def _entropy_terms(counts: np.ndarray, N: int) -> np.ndarray:
    """``-(1/N) sum_x c_x log(c_x / N_y)`` along the last axis."""
    counts = np.asarray(counts, dtype=np.float64)
    totals = counts.sum(axis=-1, keepdims=True)
    ratio = np.divide(counts, totals, out=np.ones_like(counts), where=counts > 0)
    return -(counts * np.log(ratio)).sum(axis=-1) / N


def leaf_cost(stats: LeafStats, N: int, card_i: int, penalty: Penalty = "mdl") -> float:
    """Weighted leaf entropy plus the penalty for its ``|X_i| - 1`` parameters."""
    if N < 1:
        raise DomainError("leaf cost needs N >= 1")
    R = resolve_penalty(penalty)
    return float(_entropy_terms(stats.counts, N)) + R(card_i - 1, N)


class NodeStats:
    """Training data seen through the leaves of one node's source.

    Samples are compressed to distinct rows with multiplicities; ``counts``
    holds ``N_{y, x_i}`` for every leaf.
    """

    def __init__(self, data: Dataset, i: int, source: InformationSource | None = None):
        if data.N < 1:
            raise DomainError("learning needs at least one sample")
        if source is None:
            source = InformationSource(i, (), data.space.cardinalities)
        if source.owner != i:
            raise DomainError("source belongs to another node")
        self.space = data.space
        self.i = i
        self.N = data.N
        self.card = data.space.cardinalities[i]
        self.rows, weights = data.unique_counts()
        self.weights = weights.astype(np.float64)
        self.source = source
        self.leaves = source.leaf_map(self.rows)
        self.counts = self._count(self.leaves, source.leaf_count)

    def _count(self, leaves, leaf_count):
        keys = leaves * self.card + self.rows[:, self.i]
        return np.bincount(
            keys, weights=self.weights, minlength=leaf_count * self.card
        ).reshape(leaf_count, self.card)

    @property
    def leaf_count(self) -> int:
        return self.source.leaf_count

    def leaf(self, y: int) -> LeafStats:
        return LeafStats(y, self.counts[y].copy())

    def split_counts(self, j: int) -> np.ndarray:
        """``N_{y, x_j, x_i}`` for every leaf, shape ``(L, |X_j|, |X_i|)``."""
        cj = self.space.cardinalities[j]
        keys = (self.leaves * cj + self.rows[:, j]) * self.card + self.rows[:, self.i]
        return np.bincount(
            keys, weights=self.weights, minlength=self.leaf_count * cj * self.card
        ).reshape(self.leaf_count, cj, self.card)

    def apply(self, op) -> "NodeStats":
        new = object.__new__(NodeStats)
        new.__dict__.update(self.__dict__)
        new.source = self.source.extend(op)
        xj = self.rows[:, op.j] if isinstance(op, Split) else None
        new.leaves = apply_op(self.leaves, op, self.leaf_count, xj)
        new.counts = new._count(new.leaves, new.source.leaf_count)
        return new


def cost_prime(stats: NodeStats, penalty: Penalty = "mdl") -> float:
    """Reduced cost as the sum of leaf costs."""
    R = resolve_penalty(penalty)
    return float(_entropy_terms(stats.counts, stats.N).sum()) + stats.leaf_count * R(
        stats.card - 1, stats.N
    )


def delta_split(stats: NodeStats, y: int, j: int, penalty: Penalty = "mdl") -> float:
    if j == stats.i or not 0 <= j < stats.space.n:
        raise DomainError(f"node {stats.i} cannot split on variable {j}")
    if not 0 <= y < stats.leaf_count:
        raise DomainError(f"leaf {y} does not exist")
    R = resolve_penalty(penalty)(stats.card - 1, stats.N)
    children = stats.split_counts(j)[y]
    cj = children.shape[0]
    return float(
        _entropy_terms(children, stats.N).sum() + cj * R
        - (_entropy_terms(stats.counts[y], stats.N) + R)
    )


def delta_merge(stats: NodeStats, y0: int, y1: int, penalty: Penalty = "mdl") -> float:
    if not 0 <= y0 < y1 < stats.leaf_count:
        raise DomainError(f"cannot merge leaves {y0} and {y1}")
    R = resolve_penalty(penalty)(stats.card - 1, stats.N)
    merged = stats.counts[y0] + stats.counts[y1]
    return float(
        _entropy_terms(merged, stats.N) + R
        - (_entropy_terms(stats.counts[y0], stats.N) + R)
        - (_entropy_terms(stats.counts[y1], stats.N) + R)
    )


def _table_from_counts(i: int, counts: np.ndarray, alpha: float) -> ConditionalTable:
    card = counts.shape[1]
    totals = counts.sum(axis=1, keepdims=True) + alpha * card
    rows = np.full(counts.shape, 1.0 / card)
    filled = totals[:, 0] > 0
    rows[filled] = (counts[filled] + alpha) / totals[filled]
    return ConditionalTable(i, rows)


def learn_parameters(
    data: Dataset, i: int, source: InformationSource, smoothing: float = 0.0
) -> ConditionalTable:
    """Empirical conditional ``p^D(X_i | Y_i)``; empty leaves get uniform rows.

    With ``smoothing = alpha > 0`` the rows are ``(N_{y,x} + alpha) /
    (N_y + alpha |X_i|)`` instead, which keeps every entry positive.
    """
    if smoothing < 0:
        raise DomainError("smoothing must be >= 0")
    return _table_from_counts(i, NodeStats(data, i, source).counts, smoothing)


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    op: object
    delta: float
    cost: float
    leaf_count: int


@dataclass(frozen=True)
class NodeResult:
    source: InformationSource
    table: ConditionalTable
    sampling_table: ConditionalTable
    initial_cost: float
    trace: tuple[TraceEntry, ...] = field(default=())


def _best_split(stats: NodeStats, leaf_costs: np.ndarray, R: float):
    """Lowest split delta, ties to the smallest ``(y, j)``."""
    L = stats.leaf_count
    deltas = np.full((L, stats.space.n), np.inf)
    for j in range(stats.space.n):
        if j == stats.i:
            continue
        children = stats.split_counts(j)
        occupied = (children.sum(axis=2) > 0).sum(axis=1)
        child_costs = _entropy_terms(children, stats.N).sum(axis=1) + children.shape[1] * R
        d = child_costs - leaf_costs
        d[occupied <= 1] = np.inf
        deltas[:, j] = d
    flat = int(np.argmin(deltas))
    y, j = divmod(flat, stats.space.n)
    return float(deltas[y, j]), Split(y, j)


def _best_merge(stats: NodeStats, leaf_costs: np.ndarray, R: float, cap):
    L = stats.leaf_count
    if L < 2 or cap == 0:
        return math.inf, None
    y0, y1 = np.triu_indices(L, k=1)
    if cap is not None:
        y0, y1 = y0[:cap], y1[:cap]
    merged = stats.counts[y0] + stats.counts[y1]
    deltas = _entropy_terms(merged, stats.N) + R - leaf_costs[y0] - leaf_costs[y1]
    k = int(np.argmin(deltas))
    return float(deltas[k]), Merge(int(y0[k]), int(y1[k]))


def structure_learn_node(data: Dataset, i: int, config: LearnConfig = LearnConfig()) -> NodeResult:
    """Greedy split/merge search for node ``i``'s information source.

    Starts from the constant source. Every iteration scores all splits of
    every leaf on every other variable (skipping splits that leave all of a
    leaf's samples in one child) and all leaf-pair merges, then applies the
    best one. On equal deltas splits win over merges, then the smaller
    ``(y, j)`` or ``(y0, y1)``. Stops when no candidate lowers the cost.
    """
    stats = NodeStats(data, i)
    R = resolve_penalty(config.penalty)(stats.card - 1, stats.N)
    leaf_costs = _entropy_terms(stats.counts, stats.N) + R
    cost = float(leaf_costs.sum())
    initial = cost
    trace = []
    while True:
        d_split, split = _best_split(stats, leaf_costs, R)
        d_merge, merge = _best_merge(stats, leaf_costs, R, config.merge_candidate_cap)
        delta, op = (d_split, split) if d_split <= d_merge else (d_merge, merge)
        if not delta < -DELTA_TOL:
            break
        stats = stats.apply(op)
        leaf_costs = _entropy_terms(stats.counts, stats.N) + R
        cost = float(leaf_costs.sum())
        trace.append(TraceEntry(len(trace), op, delta, cost, stats.leaf_count))
    alpha = 1.0 / stats.N if config.sampling_smoothing is None else config.sampling_smoothing
    return NodeResult(
        stats.source,
        _table_from_counts(i, stats.counts, 0.0),
        _table_from_counts(i, stats.counts, alpha),
        initial,
        tuple(trace),
    )


def learn_network(data: Dataset, config: LearnConfig = LearnConfig(), n_jobs: int | None = None) -> DependencyNetwork:
    """Learn every node independently and assemble a uniform-weight network.

    The network carries the smoothed sampling tables; the unsmoothed
    minimizers and the cost traces are kept in ``network.metadata``.
    """
    if data.N < 1:
        raise DomainError("learning needs at least one sample")
    results = Parallel(n_jobs=n_jobs)(
        delayed(structure_learn_node)(data, i, config) for i in range(data.space.n)
    )
    nodes = tuple(Node(r.source, r.sampling_table) for r in results)
    metadata = {
        "traces": [r.trace for r in results],
        "initial_costs": [r.initial_cost for r in results],
        "min_tables": [r.table for r in results],
    }
    return DependencyNetwork(data.space, nodes, metadata=metadata)
