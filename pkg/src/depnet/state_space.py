"""Joint-state indexing, dense distributions and datasets.

Flat indices are mixed-radix with variable 0 least significant, so the flat
probability vector reshapes (C order) into a tensor whose axes run from
variable ``n - 1`` down to variable 0. :func:`axis_of` maps between the two.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, DomainError

DENSE_CAP = 2**20
PROB_TOL = 1e-12


@dataclass(frozen=True)
class VariableSpace:
    """Cardinalities of ``n`` finite discrete variables."""

    cardinalities: tuple[int, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        cards = tuple(int(c) for c in self.cardinalities)
        if not cards:
            raise DomainError("a variable space needs at least one variable")
        if any(c < 2 for c in cards):
            raise DomainError(f"every cardinality must be >= 2, got {cards}")
        names = tuple(self.names) if self.names else tuple(f"X{i}" for i in range(len(cards)))
        if len(names) != len(cards):
            raise DomainError("names and cardinalities differ in length")
        if len(set(names)) != len(names):
            raise DomainError("variable names must be distinct")
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return len(self.cardinalities)

    @property
    def total_states(self) -> int:
        return int(np.prod(self.cardinalities, dtype=object))

    @property
    def strides(self) -> np.ndarray:
        return np.concatenate(([1], np.cumprod(self.cardinalities[:-1]))).astype(np.int64)

    @property
    def shape(self) -> tuple[int, ...]:
        """Tensor shape of a dense vector over this space."""
        return self.cardinalities[::-1]

    def check_dense(self, cap: int = DENSE_CAP) -> None:
        if self.total_states > cap:
            raise CapacityError(
                f"dense state space of {self.total_states} states exceeds the cap of {cap}"
            )

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DomainError(f"unknown variable {name!r}") from None

    def subspace(self, keep: Iterable[int]) -> "VariableSpace":
        keep = sorted(keep)
        return VariableSpace(
            tuple(self.cardinalities[i] for i in keep), tuple(self.names[i] for i in keep)
        )

    def all_states(self) -> np.ndarray:
        """Decoded states for every flat index, shape ``(total_states, n)``."""
        self.check_dense()
        idx = np.arange(self.total_states, dtype=np.int64)
        return (idx[:, None] // self.strides[None, :]) % np.asarray(self.cardinalities)

    def encode_many(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        return states @ self.strides


def axis_of(space: VariableSpace, i: int) -> int:
    """Tensor axis that holds variable ``i``."""
    return space.n - 1 - i


def encode_state(space: VariableSpace, state: Sequence[int]) -> int:
    if len(state) != space.n:
        raise DomainError(f"state has {len(state)} components, space has {space.n}")
    index = 0
    stride = 1
    for value, card in zip(state, space.cardinalities):
        if not 0 <= value < card:
            raise DomainError(f"value {value} out of range [0, {card})")
        index += int(value) * stride
        stride *= card
    return index


def decode_state(space: VariableSpace, index: int) -> tuple[int, ...]:
    if not 0 <= index < space.total_states:
        raise DomainError(f"index {index} out of range [0, {space.total_states})")
    values = []
    for card in space.cardinalities:
        index, value = divmod(int(index), card)
        values.append(value)
    return tuple(values)


@dataclass(frozen=True)
class DenseDistribution:
    """Probability vector over every joint state of ``space``."""

    space: VariableSpace
    probs: np.ndarray

    def __post_init__(self):
        self.space.check_dense()
        probs = np.array(self.probs, dtype=np.float64).ravel()
        if probs.shape != (self.space.total_states,):
            raise DomainError(
                f"expected {self.space.total_states} probabilities, got {probs.size}"
            )
        if not np.all(np.isfinite(probs)) or probs.min() < 0:
            raise DomainError("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise DomainError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def normalize(cls, space: VariableSpace, weights) -> "DenseDistribution":
        """Explicitly normalize non-negative weights into a distribution."""
        weights = np.asarray(weights, dtype=np.float64).ravel()
        total = weights.sum()
        if total <= 0:
            raise DomainError("weights must have positive mass")
        return cls(space, weights / total)

    @classmethod
    def uniform(cls, space: VariableSpace) -> "DenseDistribution":
        return cls(space, np.full(space.total_states, 1.0 / space.total_states))

    @property
    def tensor(self) -> np.ndarray:
        return self.probs.reshape(self.space.shape)

    def __getitem__(self, state) -> float:
        return float(self.probs[encode_state(self.space, state)])


def total_variation(p: DenseDistribution, q: DenseDistribution) -> float:
    if p.space.cardinalities != q.space.cardinalities:
        raise DomainError("distributions live on different spaces")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def marginal(p: DenseDistribution, keep: Iterable[int]) -> DenseDistribution:
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise DomainError("marginal needs a non-empty set of variables to keep")
    if keep[0] < 0 or keep[-1] >= p.space.n:
        raise DomainError(f"variables {keep} out of range for n={p.space.n}")
    drop = tuple(axis_of(p.space, i) for i in range(p.space.n) if i not in keep)
    probs = p.tensor.sum(axis=drop) if drop else p.tensor
    return DenseDistribution(p.space.subspace(keep), probs.ravel())


@dataclass(frozen=True)
class Dataset:
    """Integer samples, one row per sample and one column per variable."""

    space: VariableSpace
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.int64)
        if samples.ndim == 1 and samples.size == 0:
            samples = samples.reshape(0, self.space.n)
        if samples.ndim != 2 or samples.shape[1] != self.space.n:
            raise DomainError(f"samples must have shape (N, {self.space.n})")
        if samples.size and (
            samples.min() < 0 or np.any(samples >= np.asarray(self.space.cardinalities))
        ):
            raise DomainError("sample values out of range for the variable space")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    def unique_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct rows and their multiplicities."""
        rows, counts = np.unique(self.samples, axis=0, return_counts=True)
        return rows, counts


def empirical_distribution(data: Dataset) -> DenseDistribution:
    if data.N == 0:
        raise DomainError("empirical distribution of an empty dataset")
    counts = np.bincount(
        data.space.encode_many(data.samples), minlength=data.space.total_states
    )
    return DenseDistribution(data.space, counts / data.N)


def read_dataset(path, cardinalities: Sequence[int] | None = None) -> Dataset:
    """Read a dataset CSV.

    The first row holds variable names. Lines starting with ``#`` are
    comments; a ``#cardinalities: 2,3,2`` comment pins the cardinalities,
    otherwise each is inferred as the maximum observed value plus one.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_dataset(text, cardinalities)


def parse_dataset(text: str, cardinalities: Sequence[int] | None = None) -> Dataset:
    pinned = None
    rows = []
    header = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body.lower().startswith("cardinalities:"):
                try:
                    pinned = [int(v) for v in body.split(":", 1)[1].split(",")]
                except ValueError:
                    raise DomainError(f"line {lineno}: malformed cardinalities comment") from None
            continue
        cells = next(csv.reader([stripped]))
        if header is None:
            header = [c.strip() for c in cells]
            continue
        try:
            rows.append([int(c) for c in cells])
        except ValueError:
            raise DomainError(f"line {lineno}: non-integer value") from None
        if len(rows[-1]) != len(header):
            raise DomainError(f"line {lineno}: expected {len(header)} columns")
    if header is None:
        raise DomainError("dataset has no header row")
    samples = np.array(rows, dtype=np.int64).reshape(-1, len(header))
    if cardinalities is not None:
        pinned = list(cardinalities)
    if pinned is None:
        if samples.shape[0] == 0:
            raise DomainError("cannot infer cardinalities from an empty dataset")
        pinned = [max(int(v) + 1, 2) for v in samples.max(axis=0)]
    if len(pinned) != len(header):
        raise DomainError("cardinalities and header differ in length")
    return Dataset(VariableSpace(tuple(pinned), tuple(header)), samples)


def format_dataset(data: Dataset, comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(data.space.names)
    buf.write("#cardinalities: " + ",".join(map(str, data.space.cardinalities)) + "\n")
    for comment in comments:
        buf.write(f"# {comment}\n")
    writer.writerows(data.samples.tolist())
    return buf.getvalue()


def write_dataset(path, data: Dataset, comments: Sequence[str] = ()) -> None:
    Path(path).write_text(format_dataset(data, comments), encoding="utf-8")
