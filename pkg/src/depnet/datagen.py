"""Synthetic data: small Ising lattices and random binary Bayesian networks."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import CapacityError, DomainError
from .state_space import Dataset, DenseDistribution, VariableSpace

ISING_MAX_SITES = 20
BAYESNET_MAX_NODES = 14


@dataclass(frozen=True)
class IsingSpec:
    """Free-boundary ``rows x cols`` lattice; variable ``r * cols + c`` is site ``(r, c)``.

    Value 0 is spin -1 and value 1 is spin +1.
    """

    rows: int = 4
    cols: int = 3
    coupling: float = 1.0
    field: float = 0.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.rows * self.cols < 2:
            raise DomainError("the lattice needs at least two sites")
        if self.rows * self.cols > ISING_MAX_SITES:
            raise CapacityError(
                f"{self.rows}x{self.cols} lattice exceeds {ISING_MAX_SITES} sites"
            )

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                u = r * self.cols + c
                if c + 1 < self.cols:
                    out.append((u, u + 1))
                if r + 1 < self.rows:
                    out.append((u, u + self.cols))
        return out

    def describe(self) -> dict:
        return {"kind": "ising", **asdict(self), "boundary": "free", "spin_of_value": [-1, 1]}


def ising_distribution(spec: IsingSpec) -> DenseDistribution:
    """Boltzmann weights ``exp(J sum_<uv> s_u s_v + h sum_u s_u)``, normalized."""
    space = VariableSpace((2,) * spec.n_sites)
    spins = 2 * space.all_states() - 1
    energy = spec.field * spins.sum(axis=1).astype(float)
    for u, v in spec.edges():
        energy = energy + spec.coupling * spins[:, u] * spins[:, v]
    weights = np.exp(energy - energy.max())
    return DenseDistribution.normalize(space, weights)


def sample_exact(p: DenseDistribution, N: int, seed: int) -> Dataset:
    """``N`` i.i.d. draws by inverse CDF over flat indices (PCG64 uniforms)."""
    if N < 0:
        raise DomainError("N must be non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    cdf = np.cumsum(p.probs)
    last = int(np.flatnonzero(p.probs > 0)[-1])
    cdf[last:] = 1.0
    idx = np.searchsorted(cdf, rng.random(N), side="right")
    states = (idx[:, None] // p.space.strides[None, :]) % np.asarray(p.space.cardinalities)
    return Dataset(p.space, states)


@dataclass(frozen=True)
class BayesNetSpec:
    n_nodes: int = 12
    n_edges: int = 21
    seed: int = 0
    cpt_low: float = 0.05
    cpt_high: float = 0.95

    def __post_init__(self):
        if self.n_nodes < 2:
            raise DomainError("a Bayesian network needs at least two nodes")
        if self.n_nodes > BAYESNET_MAX_NODES:
            raise CapacityError(f"dense joint limited to {BAYESNET_MAX_NODES} nodes")
        if not 0 <= self.n_edges <= self.n_nodes * (self.n_nodes - 1) // 2:
            raise DomainError(f"{self.n_edges} edges infeasible for {self.n_nodes} nodes")
        if not 0 < self.cpt_low < self.cpt_high < 1:
            raise DomainError("CPT range must satisfy 0 < low < high < 1")


def random_bayesnet(spec: BayesNetSpec) -> tuple[DenseDistribution, dict]:
    """Random binary DAG with exactly ``n_edges`` edges and its dense joint.

    A random permutation fixes the topological order; the edge set is a
    uniform draw of ``n_edges`` forward pairs. Each parent configuration
    gets ``P(X = 1) ~ U(cpt_low, cpt_high)``.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = spec.n_nodes
    order = rng.permutation(n)
    pairs = [(order[a], order[b]) for a in range(n) for b in range(a + 1, n)]
    chosen = rng.choice(len(pairs), size=spec.n_edges, replace=False)
    parents = {v: [] for v in range(n)}
    for k in sorted(chosen.tolist()):
        u, v = pairs[k]
        parents[int(v)].append(int(u))
    for v in parents:
        parents[v].sort()

    space = VariableSpace((2,) * n)
    states = space.all_states()
    log_joint = np.zeros(space.total_states)
    cpts = {}
    for v in (int(x) for x in order):
        pa = parents[v]
        p_one = rng.uniform(spec.cpt_low, spec.cpt_high, size=2 ** len(pa))
        cpts[v] = p_one.tolist()
        config = np.zeros(space.total_states, dtype=np.int64)
        for bit, u in enumerate(pa):
            config += states[:, u] << bit
        p = np.where(states[:, v] == 1, p_one[config], 1.0 - p_one[config])
        log_joint += np.log(p)
    joint = DenseDistribution.normalize(space, np.exp(log_joint))
    description = {
        "kind": "bayesnet",
        **asdict(spec),
        "order": [int(x) for x in order],
        "parents": {str(v): parents[v] for v in range(n)},
        "cpt_p_one": {str(v): cpts[v] for v in range(n)},
    }
    return joint, description
