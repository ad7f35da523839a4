"""Dependency-network model: information sources, tables, serialization.

An information source ``Y_i(X_{-i})`` is stored as the ordered list of
split/merge operations that built it. Leaf indices are reassigned after
every operation as follows:

* ``Split(y, j)`` removes leaf ``y``, shifts higher leaves down by one and
  appends ``|X_j|`` new leaves; the state lands in ``|Y| - 1 + x_j``.
* ``Merge(y0, y1)`` with ``y0 < y1`` folds ``y1`` into ``y0`` and shifts
  leaves above ``y1`` down by one.

Replaying the log from the constant-zero function reproduces the source.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, ModelCorruptionError
from .geometry import check_weights, uniform_weights
from .state_space import PROB_TOL, DenseDistribution, VariableSpace

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Split:
    y: int
    j: int


@dataclass(frozen=True)
class Merge:
    y0: int
    y1: int


SourceOp = Union[Split, Merge]


def apply_op(leaves: np.ndarray, op: SourceOp, leaf_count: int, xj=None) -> np.ndarray:
    """Reassign leaf indices after one operation.

    ``leaves`` holds the current leaf index of each row and ``xj`` the value
    of the split variable for each row (splits only).
    """
    if isinstance(op, Split):
        new = np.where(leaves > op.y, leaves - 1, leaves)
        hit = leaves == op.y
        new[hit] = leaf_count - 1 + np.asarray(xj)[hit]
        return new
    new = np.where(leaves > op.y1, leaves - 1, leaves)
    new[leaves == op.y1] = op.y0
    return new


@dataclass(frozen=True)
class InformationSource:
    """Replayable op log for node ``owner`` over variables with ``cardinalities``."""

    owner: int
    ops: tuple[SourceOp, ...]
    cardinalities: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "cardinalities", tuple(int(c) for c in self.cardinalities))
        n = len(self.cardinalities)
        if not 0 <= self.owner < n:
            raise ModelCorruptionError(f"owner {self.owner} out of range for n={n}")
        count = 1
        for step, op in enumerate(self.ops):
            count = _next_leaf_count(op, count, self.owner, self.cardinalities, step)
        object.__setattr__(self, "_leaf_count", count)

    @property
    def leaf_count(self) -> int:
        return self._leaf_count

    def extend(self, op: SourceOp) -> "InformationSource":
        return InformationSource(self.owner, self.ops + (op,), self.cardinalities)

    def leaf_map(self, states: np.ndarray) -> np.ndarray:
        """Leaf index of every row of ``states`` (shape ``(m, n)``)."""
        states = np.asarray(states)
        leaves = np.zeros(states.shape[0], dtype=np.int64)
        count = 1
        for op in self.ops:
            if isinstance(op, Split):
                leaves = apply_op(leaves, op, count, states[:, op.j])
                count += self.cardinalities[op.j] - 1
            else:
                leaves = apply_op(leaves, op, count)
                count -= 1
        return leaves


def _next_leaf_count(op, count, owner, cards, step):
    if isinstance(op, Split):
        if not 0 <= op.y < count:
            raise ModelCorruptionError(f"op {step}: split of missing leaf {op.y}")
        if not 0 <= op.j < len(cards) or op.j == owner:
            raise ModelCorruptionError(f"op {step}: cannot split node {owner} on variable {op.j}")
        return count + cards[op.j] - 1
    if isinstance(op, Merge):
        if not op.y0 < op.y1:
            raise ModelCorruptionError(f"op {step}: merge requires y0 < y1, got {op.y0}, {op.y1}")
        if op.y0 < 0 or op.y1 >= count:
            raise ModelCorruptionError(f"op {step}: merge of missing leaf")
        return count - 1
    raise ModelCorruptionError(f"op {step}: unknown operation {op!r}")


def evaluate_source(source: InformationSource, state: Sequence[int]) -> int:
    """Replay the op log on one joint state; the owner's value is ignored."""
    y, count = 0, 1
    for op in source.ops:
        if isinstance(op, Split):
            if y == op.y:
                y = count - 1 + int(state[op.j])
            elif y > op.y:
                y -= 1
            count += source.cardinalities[op.j] - 1
        else:
            if y == op.y1:
                y = op.y0
            elif y > op.y1:
                y -= 1
            count -= 1
    return y


def materialize_source(source: InformationSource, space: VariableSpace) -> np.ndarray:
    """Leaf index for every assignment of ``X_{-i}``, mixed radix over the
    remaining variables (lowest index least significant)."""
    i = source.owner
    others = [j for j in range(space.n) if j != i]
    sub = space.subspace(others)
    sub.check_dense()
    sub_states = sub.all_states()
    states = np.zeros((sub.total_states, space.n), dtype=np.int64)
    states[:, others] = sub_states
    return source.leaf_map(states)


@dataclass(frozen=True, eq=False)
class ConditionalTable:
    """Row-stochastic table ``theta_i(X_i | Y_i)``, one row per leaf."""

    owner: int
    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 2:
            raise ModelCorruptionError("table must be a 2-D array with at least one row")
        if not np.all(np.isfinite(rows)) or rows.min() < 0:
            raise ModelCorruptionError("table entries must be finite and non-negative")
        bad = np.abs(rows.sum(axis=1) - 1.0) > PROB_TOL
        if bad.any():
            raise ModelCorruptionError(
                f"node {self.owner}: rows {np.flatnonzero(bad).tolist()} do not sum to 1"
            )
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def __eq__(self, other):
        if not isinstance(other, ConditionalTable):
            return NotImplemented
        return self.owner == other.owner and np.array_equal(self.rows, other.rows)

    @property
    def leaf_count(self) -> int:
        return self.rows.shape[0]

    @property
    def n_free_parameters(self) -> int:
        return self.rows.shape[0] * (self.rows.shape[1] - 1)


@dataclass(frozen=True)
class Node:
    source: InformationSource
    table: ConditionalTable


@dataclass(frozen=True, eq=False)
class DependencyNetwork:
    """``n`` nodes ``(Y_i, theta_i)`` plus random-scan weights ``c_i``."""

    space: VariableSpace
    nodes: tuple[Node, ...]
    weights: np.ndarray = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if len(nodes) != self.space.n:
            raise ModelCorruptionError(f"expected {self.space.n} nodes, got {len(nodes)}")
        for i, node in enumerate(nodes):
            if node.source.owner != i or node.table.owner != i:
                raise ModelCorruptionError(f"node {i} carries structures owned by another node")
            if node.source.cardinalities != self.space.cardinalities:
                raise ModelCorruptionError(f"node {i}: source built for a different space")
            if node.table.leaf_count != node.source.leaf_count:
                raise ModelCorruptionError(
                    f"node {i}: table has {node.table.leaf_count} rows, "
                    f"source has {node.source.leaf_count} leaves"
                )
            if node.table.rows.shape[1] != self.space.cardinalities[i]:
                raise ModelCorruptionError(f"node {i}: table width != |X_{i}|")
        weights = uniform_weights(self.space.n) if self.weights is None else self.weights
        try:
            weights = check_weights(weights, self.space.n)
        except DomainError as exc:
            raise ModelCorruptionError(str(exc)) from None
        object.__setattr__(self, "weights", weights)

    def __eq__(self, other):
        if not isinstance(other, DependencyNetwork):
            return NotImplemented
        return (
            self.space == other.space
            and np.array_equal(self.weights, other.weights)
            and all(
                a.source == b.source and np.array_equal(a.table.rows, b.table.rows)
                for a, b in zip(self.nodes, other.nodes)
            )
        )

    @property
    def n(self) -> int:
        return self.space.n

    def with_weights(self, weights) -> "DependencyNetwork":
        return DependencyNetwork(self.space, self.nodes, weights, dict(self.metadata))

    @cached_property
    def _all_states(self) -> np.ndarray:
        return self.space.all_states()

    def leaf_map(self, i: int) -> np.ndarray:
        """Leaf of node ``i`` at every flat joint state (dense spaces only)."""
        cache = self.__dict__.setdefault("_leaf_cache", {})
        if i not in cache:
            leaves = self.nodes[i].source.leaf_map(self._all_states)
            leaves.setflags(write=False)
            cache[i] = leaves
        return cache[i]

    def kernel(self, i: int) -> np.ndarray:
        """``theta_i(x_i | y_i(x))`` at every flat joint state ``x``."""
        cache = self.__dict__.setdefault("_kernel_cache", {})
        if i not in cache:
            k = self.nodes[i].table.rows[self.leaf_map(i), self._all_states[:, i]]
            k.setflags(write=False)
            cache[i] = k
        return cache[i]


def conditional_table_from(p: DenseDistribution, i: int, source: InformationSource) -> tuple[ConditionalTable, np.ndarray]:
    """``p(X_i | Y_i)`` as a table; leaves with zero mass get the uniform row.

    Returns the table and the indices of the uniform-filled leaves.
    """
    card = p.space.cardinalities[i]
    leaves = source.leaf_map(p.space.all_states())
    values = p.space.all_states()[:, i]
    joint = np.bincount(
        leaves * card + values, weights=p.probs, minlength=source.leaf_count * card
    ).reshape(source.leaf_count, card)
    mass = joint.sum(axis=1)
    empty = mass <= 0
    rows = np.empty_like(joint)
    rows[~empty] = joint[~empty] / mass[~empty, None]
    rows[empty] = 1.0 / card
    return ConditionalTable(i, rows), np.flatnonzero(empty)


def lossless_source(space: VariableSpace, i: int) -> InformationSource:
    """Source that splits on every ``j != i`` in index order."""
    ops = []
    count = 1
    for j in range(space.n):
        if j == i:
            continue
        for _ in range(count):
            ops.append(Split(0, j))
        count *= space.cardinalities[j]
    return InformationSource(i, tuple(ops), space.cardinalities)


def genuine_gibbs_network(p: DenseDistribution, return_flags: bool = False):
    """Network whose tables are the full conditionals of ``p``.

    Contexts with zero mass under ``p`` get uniform rows; their leaf indices
    are listed per node in ``network.metadata["uniform_leaves"]``.
    """
    nodes = []
    flags = {}
    for i in range(p.space.n):
        source = lossless_source(p.space, i)
        table, empty = conditional_table_from(p, i, source)
        nodes.append(Node(source, table))
        if empty.size:
            flags[i] = empty.tolist()
    net = DependencyNetwork(p.space, tuple(nodes), metadata={"uniform_leaves": flags})
    return (net, flags) if return_flags else net


def _num(v: float) -> str:
    return format(float(v), ".16e")


def to_json(network: DependencyNetwork) -> str:
    """Versioned JSON text. Floats carry 17 significant digits."""
    lines = [
        "{",
        f'  "version": {FORMAT_VERSION},',
        f'  "cardinalities": {json.dumps(list(network.space.cardinalities))},',
        f'  "names": {json.dumps(list(network.space.names))},',
        '  "weights": [' + ", ".join(_num(c) for c in network.weights) + "],",
        '  "nodes": [',
    ]
    for i, node in enumerate(network.nodes):
        ops = [
            {"op": "split", "y": op.y, "j": op.j}
            if isinstance(op, Split)
            else {"op": "merge", "y0": op.y0, "y1": op.y1}
            for op in node.source.ops
        ]
        rows = ", ".join("[" + ", ".join(_num(v) for v in row) + "]" for row in node.table.rows)
        sep = "," if i + 1 < network.n else ""
        lines.append(f'    {{"i": {i}, "ops": {json.dumps(ops)}, "table": [{rows}]}}{sep}')
    lines += ["  ]", "}"]
    return "\n".join(lines) + "\n"


def from_json(text: str) -> DependencyNetwork:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelCorruptionError(f"model is not valid JSON: {exc}") from None
    if doc.get("version") != FORMAT_VERSION:
        raise ModelCorruptionError(
            f"unsupported model version {doc.get('version')!r}, expected {FORMAT_VERSION}"
        )
    try:
        space = VariableSpace(tuple(doc["cardinalities"]), tuple(doc.get("names") or ()))
        nodes = []
        for i, entry in enumerate(doc["nodes"]):
            if entry["i"] != i:
                raise ModelCorruptionError(f"node entries out of order at position {i}")
            ops = []
            for op in entry["ops"]:
                if op["op"] == "split":
                    ops.append(Split(int(op["y"]), int(op["j"])))
                elif op["op"] == "merge":
                    ops.append(Merge(int(op["y0"]), int(op["y1"])))
                else:
                    raise ModelCorruptionError(f"unknown op {op['op']!r}")
            source = InformationSource(i, tuple(ops), space.cardinalities)
            nodes.append(Node(source, ConditionalTable(i, np.asarray(entry["table"], dtype=float))))
        return DependencyNetwork(space, tuple(nodes), np.asarray(doc["weights"], dtype=float))
    except (KeyError, TypeError) as exc:
        raise ModelCorruptionError(f"model file is missing a field: {exc}") from None
    except DomainError as exc:
        raise ModelCorruptionError(str(exc)) from None


def save(network: DependencyNetwork, path) -> None:
    Path(path).write_text(to_json(network), encoding="utf-8")


def load(path) -> DependencyNetwork:
    return from_json(Path(path).read_text(encoding="utf-8"))
