import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depnet.errors import DomainError
from depnet.geometry import (
    check_weights,
    clamped_decomposition,
    conditional_entropy,
    entropy,
    fc_divergence,
    fc_limit,
    full_conditional,
    kl_divergence,
    kl_to_full_conditional_manifold,
    m_project,
    manifold_kl_from_data,
    pseudo_log_likelihood,
)
from depnet.network import (
    ConditionalTable,
    DependencyNetwork,
    InformationSource,
    Node,
    Split,
    genuine_gibbs_network,
    lossless_source,
)
from depnet.state_space import Dataset, DenseDistribution, VariableSpace, empirical_distribution, marginal

from helpers import brute_conditional, brute_fc, brute_kl, random_distribution, random_network, states_of

SPACE22 = VariableSpace((2, 2))
COUNTING = DenseDistribution(SPACE22, [0.5, 0, 0.25, 0.25])
CONSTANT0 = InformationSource(0, (), (2, 2))


def table(owner, rows):
    return ConditionalTable(owner, np.asarray(rows, dtype=float))


def random_manifold(rng, cards, i, n_ops=2):
    """A random ``(theta, source)`` pair for node ``i`` with positive rows."""
    net = random_network(rng, cards, max_ops=n_ops, min_prob=0.05)
    node = net.nodes[i]
    return node.table, node.source


class TestEntropy:
    def test_point_mass(self):
        assert entropy(DenseDistribution(SPACE22, [0, 0, 1, 0])) == 0.0

    def test_uniform(self):
        assert entropy(DenseDistribution.uniform(SPACE22)) == pytest.approx(math.log(4), abs=1e-12)

    def test_counting(self):
        assert entropy(COUNTING) == pytest.approx(1.5 * math.log(2), abs=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = random_distribution(rng, (2, 3, 2))
            assert 0 <= entropy(p) <= math.log(12) + 1e-12


class TestConditionalEntropy:
    def test_independent(self):
        p = DenseDistribution(SPACE22, np.outer([0.3, 0.7], [0.6, 0.4]).ravel())
        src = InformationSource(1, (Split(0, 0),), (2, 2))
        h_marginal = entropy(marginal(p, {1}))
        assert conditional_entropy(p, 1, src) == pytest.approx(h_marginal, abs=1e-12)

    def test_functional(self):
        p = DenseDistribution(SPACE22, [0.4, 0, 0, 0.6])
        src = InformationSource(1, (Split(0, 0),), (2, 2))
        assert conditional_entropy(p, 1, src) == pytest.approx(0.0, abs=1e-15)

    def test_counting(self):
        # X_0 = 0 carries mass 0.75 with X_1 | X_0 = 0 ~ (2/3, 1/3); X_0 = 1 is pure.
        src = InformationSource(1, (Split(0, 0),), (2, 2))
        expected = 0.75 * -(2 / 3 * math.log(2 / 3) + 1 / 3 * math.log(1 / 3))
        assert conditional_entropy(COUNTING, 1, src) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.477386, abs=1e-6)

    def test_all_others_is_a_lower_bound(self):
        rng = np.random.default_rng(1)
        cards = (2, 3, 2)
        for _ in range(20):
            p = random_distribution(rng, cards, full_support=False)
            theta, src = random_manifold(rng, cards, 1)
            assert conditional_entropy(p, 1, src) >= conditional_entropy(p, 1) - 1e-12
            full = lossless_source(p.space, 1)
            assert conditional_entropy(p, 1, full) == pytest.approx(conditional_entropy(p, 1), abs=1e-12)


class TestKL:
    def test_self(self):
        assert kl_divergence(COUNTING, COUNTING) == 0.0

    def test_example(self):
        s = VariableSpace((2,))
        value = kl_divergence(DenseDistribution(s, [0.5, 0.5]), DenseDistribution(s, [0.25, 0.75]))
        assert value == pytest.approx(0.143841, abs=1e-6)
        assert value == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-15)

    def test_disjoint(self):
        s = VariableSpace((2,))
        assert kl_divergence(DenseDistribution(s, [1, 0]), DenseDistribution(s, [0, 1])) == math.inf

    def test_zero_mass_in_p_is_free(self):
        q = DenseDistribution.uniform(SPACE22)
        assert kl_divergence(COUNTING, q) == pytest.approx(brute_kl(COUNTING.probs, q.probs), abs=1e-15)

    def test_space_mismatch(self):
        with pytest.raises(DomainError):
            kl_divergence(COUNTING, DenseDistribution.uniform(VariableSpace((4,))))


class TestFullConditionalManifold:
    def test_full_conditional_brute_force(self):
        rng = np.random.default_rng(2)
        cards = (2, 3, 2)
        p = random_distribution(rng, cards, full_support=False, concentration=0.3)
        for i in range(3):
            oracle = brute_conditional(p, i)
            got = full_conditional(p, i)
            for k, s in enumerate(states_of(cards)):
                assert got[k] == pytest.approx(oracle[s], abs=1e-14)

    def test_on_manifold(self):
        p = random_distribution(np.random.default_rng(3), (2, 2))
        net = genuine_gibbs_network(p)
        for i, node in enumerate(net.nodes):
            assert kl_to_full_conditional_manifold(p, i, node.table, node.source) == pytest.approx(0.0, abs=1e-15)

    def test_uniform_example(self):
        p = DenseDistribution.uniform(SPACE22)
        theta = table(0, [[0.2, 0.8]])
        expected = 0.5 * math.log(0.5 / 0.2) + 0.5 * math.log(0.5 / 0.8)
        assert kl_to_full_conditional_manifold(p, 0, theta, CONSTANT0) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.223144, abs=1e-6)

    def test_m_project_example(self):
        p = DenseDistribution.uniform(SPACE22)
        q = m_project(p, 0, table(0, [[0.2, 0.8]]), CONSTANT0)
        np.testing.assert_allclose(q.probs, [0.1, 0.4, 0.1, 0.4], atol=1e-15)

    def test_m_project_fixed_point(self):
        rng = np.random.default_rng(4)
        theta, src = random_manifold(rng, (2, 3, 2), 2)
        p = m_project(random_distribution(rng, (2, 3, 2)), 2, theta, src)
        np.testing.assert_allclose(m_project(p, 2, theta, src).probs, p.probs, atol=1e-15)

    def test_zero_theta_on_support(self):
        p = DenseDistribution.uniform(SPACE22)
        assert kl_to_full_conditional_manifold(p, 0, table(0, [[1.0, 0.0]]), CONSTANT0) == math.inf

    def test_table_shape_checked(self):
        with pytest.raises(DomainError):
            m_project(COUNTING, 0, table(0, [[0.5, 0.5], [0.5, 0.5]]), CONSTANT0)

    @given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 2), (2, 3), (2, 2, 2), (3, 2, 2)]))
    @settings(max_examples=60, deadline=None)
    def test_kl_equals_kl_to_projection(self, seed, cards):
        rng = np.random.default_rng(seed)
        i = int(rng.integers(len(cards)))
        theta, src = random_manifold(rng, cards, i)
        p = random_distribution(rng, cards, full_support=False, concentration=0.5)
        q = m_project(p, i, theta, src)
        np.testing.assert_allclose(marginal(q, [j for j in range(len(cards)) if j != i]).probs,
                                   marginal(p, [j for j in range(len(cards)) if j != i]).probs, atol=1e-15)
        assert kl_to_full_conditional_manifold(p, i, theta, src) == pytest.approx(
            kl_divergence(p, q), abs=1e-12
        )

    @given(st.integers(0, 2**32 - 1), st.floats(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_linearity(self, seed, lam):
        rng = np.random.default_rng(seed)
        cards = (2, 3, 2)
        theta, src = random_manifold(rng, cards, 1)
        p0, p1 = random_distribution(rng, cards), random_distribution(rng, cards)
        mix = DenseDistribution.normalize(p0.space, (1 - lam) * p0.probs + lam * p1.probs)
        lhs = m_project(mix, 1, theta, src).probs
        rhs = (1 - lam) * m_project(p0, 1, theta, src).probs + lam * m_project(p1, 1, theta, src).probs
        np.testing.assert_allclose(lhs, rhs, atol=1e-12, rtol=0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_pythagorean(self, seed):
        rng = np.random.default_rng(seed)
        cards = (2, 2, 3)
        i = int(rng.integers(3))
        theta, src = random_manifold(rng, cards, i)
        p = random_distribution(rng, cards)
        q = m_project(random_distribution(rng, cards), i, theta, src)
        rest = [j for j in range(3) if j != i]
        lhs = kl_divergence(p, q)
        rhs = kl_to_full_conditional_manifold(p, i, theta, src) + kl_divergence(marginal(p, rest), marginal(q, rest))
        assert lhs == pytest.approx(rhs, abs=1e-10)


class TestFlatness:
    LAMBDAS = (-0.25, 0.3, 0.5, 0.9, 1.5)

    @pytest.mark.parametrize("cards", [(2, 2), (2, 2, 2)])
    def test_mixtures_stay_on_manifold(self, cards):
        rng = np.random.default_rng(5)
        for _ in range(10):
            i = int(rng.integers(len(cards)))
            theta, src = random_manifold(rng, cards, i)
            p0 = m_project(random_distribution(rng, cards), i, theta, src)
            p1 = m_project(random_distribution(rng, cards), i, theta, src)
            target = m_project(p0, i, theta, src)
            kernel = target.probs / np.broadcast_to(
                target.tensor.sum(axis=len(cards) - 1 - i, keepdims=True), target.space.shape
            ).ravel()
            for lam in self.LAMBDAS:
                m_mix = (1 - lam) * p0.probs + lam * p1.probs
                if m_mix.min() >= 0:
                    q = DenseDistribution.normalize(p0.space, m_mix)
                    np.testing.assert_allclose(full_conditional(q, i), kernel, atol=1e-10)
                e_mix = np.exp((1 - lam) * np.log(p0.probs) + lam * np.log(p1.probs))
                q = DenseDistribution.normalize(p0.space, e_mix)
                np.testing.assert_allclose(full_conditional(q, i), kernel, atol=1e-10)


class TestFCDivergence:
    def test_self(self):
        p = random_distribution(np.random.default_rng(6), (2, 3))
        assert fc_divergence(p, p) == 0.0

    def test_product_example(self):
        p0, p1, q0, q1 = [0.3, 0.7], [0.6, 0.4], [0.5, 0.5], [0.9, 0.1]
        p = DenseDistribution(SPACE22, np.outer(p1, p0).ravel())
        q = DenseDistribution(SPACE22, np.outer(q1, q0).ravel())
        expected = 0.5 * brute_kl(p0, q0) + 0.5 * brute_kl(p1, q1)
        assert fc_divergence(p, q, [0.5, 0.5]) == pytest.approx(expected, abs=1e-14)

    def test_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            p, q = random_distribution(rng, (2, 3, 2)), random_distribution(rng, (2, 3, 2))
            c = rng.dirichlet(np.ones(3))
            assert fc_divergence(p, q, c) == pytest.approx(brute_fc(p, q, c), abs=1e-12)

    def test_empty_context_conventions(self):
        q = DenseDistribution(SPACE22, [0.5, 0.5, 0, 0])
        p_inside = DenseDistribution(SPACE22, [0.2, 0.8, 0, 0])
        p_outside = DenseDistribution(SPACE22, [0.2, 0.4, 0.4, 0])
        assert math.isfinite(fc_divergence(p_inside, q))
        assert fc_divergence(p_outside, q) == math.inf

    def test_pseudo_log_likelihood_form(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            p, q = random_distribution(rng, (2, 2, 3)), random_distribution(rng, (2, 2, 3))
            c = rng.dirichlet(np.ones(3))
            self_term = sum(c[i] * float(p.probs @ np.log(full_conditional(p, i))) for i in range(3))
            assert fc_divergence(p, q, c) == pytest.approx(self_term - pseudo_log_likelihood(p, q, c), abs=1e-10)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_bounded_by_kl(self, seed):
        rng = np.random.default_rng(seed)
        p, q = random_distribution(rng, (2, 2, 2)), random_distribution(rng, (2, 2, 2))
        fc = fc_divergence(p, q)
        assert 0 <= fc <= kl_divergence(p, q) + 1e-12

    def test_weights_validated(self):
        with pytest.raises(DomainError):
            check_weights([0.5, 0.6], 2)
        with pytest.raises(DomainError):
            check_weights([1.0], 2)
        with pytest.raises(DomainError):
            check_weights([1.5, -0.5], 2)


class TestFCLimit:
    def test_genuine_gibbs_is_zero(self):
        p = random_distribution(np.random.default_rng(9), (2, 3, 2))
        assert fc_limit(p, genuine_gibbs_network(p)) == pytest.approx(0.0, abs=1e-15)

    def test_single_node(self):
        space = VariableSpace((3,))
        p = DenseDistribution(space, [0.2, 0.3, 0.5])
        theta = table(0, [[0.4, 0.4, 0.2]])
        src = InformationSource(0, (), (3,))
        net = DependencyNetwork(space, (Node(src, theta),))
        assert fc_limit(p, net) == pytest.approx(kl_to_full_conditional_manifold(p, 0, theta, src), abs=1e-15)

    def test_weighted_sum(self):
        rng = np.random.default_rng(10)
        net = random_network(rng, (2, 3, 2), min_prob=0.01).with_weights([0.2, 0.5, 0.3])
        p = random_distribution(rng, (2, 3, 2))
        terms = [kl_to_full_conditional_manifold(p, i, nd.table, nd.source) for i, nd in enumerate(net.nodes)]
        assert fc_limit(p, net) == pytest.approx(float(np.dot([0.2, 0.5, 0.3], terms)), abs=1e-15)

    def test_from_data_matches_dense(self):
        rng = np.random.default_rng(11)
        cards = (2, 3, 2, 2)
        net = random_network(rng, cards, min_prob=0.01)
        samples = np.column_stack([rng.integers(0, c, 300) for c in cards])
        data = Dataset(VariableSpace(cards), samples)
        pD = empirical_distribution(data)
        for i, node in enumerate(net.nodes):
            assert manifold_kl_from_data(data, i, node.table, node.source) == pytest.approx(
                kl_to_full_conditional_manifold(pD, i, node.table, node.source), abs=1e-12
            )


class TestClampedDecomposition:
    def test_identity(self):
        rng = np.random.default_rng(12)
        cards = (2, 2, 3, 2)
        for _ in range(10):
            net = random_network(rng, cards, min_prob=0.01)
            p = random_distribution(rng, cards, full_support=False, concentration=0.5)
            clamp = sorted(rng.choice(4, size=2, replace=False).tolist())
            for i in set(range(4)) - set(clamp):
                node = net.nodes[i]
                terms = clamped_decomposition(p, i, node.table, node.source, clamp)
                assert sum(w for _, w, _ in terms) == pytest.approx(1.0, abs=1e-12)
                total = sum(w * kl for _, w, kl in terms)
                assert total == pytest.approx(kl_to_full_conditional_manifold(p, i, node.table, node.source), abs=1e-10)

    def test_clamped_node_rejected(self):
        with pytest.raises(DomainError):
            clamped_decomposition(COUNTING, 0, table(0, [[0.5, 0.5]]), CONSTANT0, [0])
