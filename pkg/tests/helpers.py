"""Independent brute-force oracles shared by the test modules.

Everything here works state by state with plain loops and dictionaries so
that it shares no code path with the vectorized library routines.
"""

import itertools
import math

import numpy as np

from depnet.network import ConditionalTable, DependencyNetwork, InformationSource, Merge, Node, Split
from depnet.state_space import DenseDistribution, VariableSpace


def states_of(cards):
    """All joint states with variable 0 varying fastest."""
    for rev in itertools.product(*[range(c) for c in reversed(cards)]):
        yield tuple(reversed(rev))


def random_distribution(rng, cards, full_support=True, concentration=1.0):
    space = VariableSpace(tuple(cards))
    w = rng.dirichlet(np.full(space.total_states, concentration))
    if full_support:
        w = w + 1e-3
    return DenseDistribution.normalize(space, w)


def brute_conditional(p, i):
    """``{state: p(x_i | x_{-i})}`` by summing matching states."""
    cards = p.space.cardinalities
    probs = {s: p.probs[k] for k, s in enumerate(states_of(cards))}
    out = {}
    for s in probs:
        ctx = sum(probs[s[:i] + (v,) + s[i + 1:]] for v in range(cards[i]))
        out[s] = probs[s] / ctx if ctx > 0 else 0.0
    return out


def brute_kl(p_probs, q_probs):
    total = 0.0
    for a, b in zip(p_probs, q_probs):
        if a > 0:
            if b == 0:
                return math.inf
            total += a * math.log(a / b)
    return total


def replay(ops, owner, cards, state):
    """Leaf of ``state`` by literal replay of split/merge re-indexing."""
    leaf, count = 0, 1
    for op in ops:
        if isinstance(op, Split):
            new_count = count - 1 + cards[op.j]
            if leaf == op.y:
                leaf = count - 1 + state[op.j]
            elif leaf > op.y:
                leaf -= 1
            count = new_count
        else:
            if leaf == op.y1:
                leaf = op.y0
            elif leaf > op.y1:
                leaf -= 1
            count -= 1
    return leaf


def random_ops(rng, owner, cards, n_ops):
    ops, count = [], 1
    others = [j for j in range(len(cards)) if j != owner]
    for _ in range(n_ops):
        if count >= 2 and rng.random() < 0.3:
            y0, y1 = sorted(rng.choice(count, size=2, replace=False).tolist())
            ops.append(Merge(y0, y1))
            count -= 1
        else:
            j = int(rng.choice(others))
            ops.append(Split(int(rng.integers(count)), j))
            count += cards[j] - 1
    return tuple(ops)


def random_network(rng, cards, max_ops=3, min_prob=0.0):
    """Arbitrary pseudo network with random sources and tables."""
    cards = tuple(cards)
    nodes = []
    for i in range(len(cards)):
        src = InformationSource(i, random_ops(rng, i, cards, int(rng.integers(0, max_ops + 1))), cards)
        rows = rng.dirichlet(np.ones(cards[i]), size=src.leaf_count)
        if min_prob:
            rows = (rows + min_prob) / (1 + min_prob * cards[i])
        nodes.append(Node(src, ConditionalTable(i, rows)))
    return DependencyNetwork(VariableSpace(cards), tuple(nodes))


def brute_transition(network, weights=None):
    """Dense random-scan transition matrix built state by state."""
    cards = network.space.cardinalities
    states = list(states_of(cards))
    index = {s: k for k, s in enumerate(states)}
    c = network.weights if weights is None else weights
    T = np.zeros((len(states), len(states)))
    for s in states:
        for i, node in enumerate(network.nodes):
            y = replay(node.source.ops, i, cards, s)
            for v in range(cards[i]):
                t = s[:i] + (v,) + s[i + 1:]
                T[index[s], index[t]] += c[i] * node.table.rows[y, v]
    return T


def brute_node_matrix(network, i):
    onehot = np.zeros(network.n)
    onehot[i] = 1.0
    return brute_transition(network, onehot)


def brute_stationary(T):
    """Left eigenvector of ``T`` for eigenvalue 1 via least squares."""
    n = T.shape[0]
    A = np.vstack([T.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def brute_fc(p, q, weights):
    total = 0.0
    for i, c in enumerate(weights):
        pc, qc = brute_conditional(p, i), brute_conditional(q, i)
        for k, s in enumerate(states_of(p.space.cardinalities)):
            if p.probs[k] > 0:
                if qc[s] == 0:
                    return math.inf
                total += c * p.probs[k] * math.log(pc[s] / qc[s])
    return total
