import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depnet.errors import CapacityError, ModelCorruptionError
from depnet.geometry import fc_limit
from depnet.network import (
    ConditionalTable,
    DependencyNetwork,
    InformationSource,
    Merge,
    Node,
    Split,
    evaluate_source,
    from_json,
    genuine_gibbs_network,
    load,
    lossless_source,
    materialize_source,
    save,
    to_json,
)
from depnet.state_space import DenseDistribution, VariableSpace

from helpers import brute_conditional, random_distribution, random_network, random_ops, replay, states_of

CARDS = (2, 3, 2, 4)


class TestEvaluateSource:
    def test_empty_log(self):
        src = InformationSource(0, (), (2, 2))
        for s in states_of((2, 2)):
            assert evaluate_source(src, s) == 0

    @pytest.mark.parametrize("card", [2, 3, 4])
    def test_single_split(self, card):
        src = InformationSource(0, (Split(0, 1),), (2, card))
        for s in states_of((2, card)):
            assert evaluate_source(src, s) == s[1]

    def test_split_then_merge(self):
        src = InformationSource(0, (Split(0, 1), Merge(0, 1)), (2, 2))
        assert src.leaf_count == 1
        assert {evaluate_source(src, s) for s in states_of((2, 2))} == {0}

    def test_split_shifts_lower_leaves(self):
        # Leaves after Split(0,1): x1. Splitting leaf 0 again on X2 drops it
        # and appends x1=0 states as leaves 1 and 2; old leaf 1 moves to 0.
        src = InformationSource(0, (Split(0, 1), Split(0, 2)), (2, 2, 2))
        assert evaluate_source(src, (0, 1, 0)) == 0
        assert evaluate_source(src, (0, 0, 0)) == 1
        assert evaluate_source(src, (0, 0, 1)) == 2

    @pytest.mark.parametrize(
        "ops",
        [(Split(1, 1),), (Split(0, 0),), (Split(0, 5),), (Merge(0, 0),), (Split(0, 1), Merge(1, 0)),
         (Split(0, 1), Merge(0, 2))],
    )
    def test_corrupt_logs(self, ops):
        with pytest.raises(ModelCorruptionError):
            InformationSource(0, ops, (2, 2, 2))

    @given(st.integers(0, 2**32 - 1), st.integers(0, 8))
    @settings(max_examples=60, deadline=None)
    def test_matches_literal_replay(self, seed, n_ops):
        rng = np.random.default_rng(seed)
        owner = int(rng.integers(len(CARDS)))
        src = InformationSource(owner, random_ops(rng, owner, CARDS, n_ops), CARDS)
        states = VariableSpace(CARDS).all_states()
        leaves = src.leaf_map(states)
        for s, y in zip(states, leaves):
            assert y == replay(src.ops, owner, CARDS, tuple(s)) == evaluate_source(src, s)
        assert leaves.min() >= 0 and leaves.max() < src.leaf_count

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_ignores_owner_and_counts_leaves(self, seed):
        rng = np.random.default_rng(seed)
        owner = int(rng.integers(len(CARDS)))
        ops = random_ops(rng, owner, CARDS, 6)
        count = 1
        for k, op in enumerate(ops):
            count += CARDS[op.j] - 1 if isinstance(op, Split) else -1
            assert InformationSource(owner, ops[: k + 1], CARDS).leaf_count == count
        src = InformationSource(owner, ops, CARDS)
        states = VariableSpace(CARDS).all_states()
        base = src.leaf_map(states)
        for v in range(CARDS[owner]):
            flipped = states.copy()
            flipped[:, owner] = v
            np.testing.assert_array_equal(src.leaf_map(flipped), base)


class TestMaterialize:
    def test_empty(self):
        np.testing.assert_array_equal(materialize_source(InformationSource(0, (), (2, 2)), VariableSpace((2, 2))), [0, 0])

    def test_split(self):
        src = InformationSource(0, (Split(0, 1),), (2, 2))
        np.testing.assert_array_equal(materialize_source(src, VariableSpace((2, 2))), [0, 1])

    def test_partition(self):
        rng = np.random.default_rng(0)
        src = InformationSource(1, random_ops(rng, 1, CARDS, 5), CARDS)
        table = materialize_source(src, VariableSpace(CARDS))
        assert table.size == 2 * 2 * 4
        assert np.bincount(table, minlength=src.leaf_count).sum() == table.size

    def test_cap(self):
        space = VariableSpace((2,) * 22)
        with pytest.raises(CapacityError):
            materialize_source(InformationSource(0, (), space.cardinalities), space)


class TestTables:
    def test_row_sums(self):
        with pytest.raises(ValueError):
            ConditionalTable(0, np.array([[0.5, 0.48]]))
        with pytest.raises(ValueError):
            ConditionalTable(0, np.array([[1.2, -0.2]]))

    def test_network_checks_widths(self):
        space = VariableSpace((2, 3))
        src0 = InformationSource(0, (), space.cardinalities)
        src1 = InformationSource(1, (), space.cardinalities)
        bad = ConditionalTable(1, np.array([[0.5, 0.5]]))
        with pytest.raises(ValueError):
            DependencyNetwork(space, (Node(src0, ConditionalTable(0, np.array([[0.5, 0.5]]))), Node(src1, bad)))

    def test_free_parameters(self):
        t = ConditionalTable(0, np.full((4, 3), 1 / 3))
        assert t.n_free_parameters == 8


class TestGenuineGibbs:
    def test_uniform(self):
        net = genuine_gibbs_network(DenseDistribution.uniform(VariableSpace((2, 2))))
        for node in net.nodes:
            np.testing.assert_array_equal(node.table.rows, 0.5)
        np.testing.assert_array_equal(net.weights, [0.5, 0.5])

    def test_counting_example(self):
        p = DenseDistribution(VariableSpace((2, 2)), [0.5, 0, 0.25, 0.25])
        oracle = brute_conditional(p, 1)
        net = genuine_gibbs_network(p)
        rows = net.nodes[1].table.rows
        np.testing.assert_allclose(rows[0], [oracle[(0, 0)], oracle[(0, 1)]], atol=1e-15)
        np.testing.assert_allclose(rows[0], [2 / 3, 1 / 3], atol=1e-15)
        np.testing.assert_allclose(rows[1], [0, 1], atol=1e-15)

    def test_lossless(self):
        space = VariableSpace(CARDS)
        for i in range(space.n):
            src = lossless_source(space, i)
            assert src.leaf_count == space.total_states // CARDS[i]
            assert len(set(materialize_source(src, space).tolist())) == src.leaf_count

    def test_brute_force_conditionals(self):
        p = random_distribution(np.random.default_rng(1), (2, 3, 2))
        net = genuine_gibbs_network(p)
        for i in range(3):
            oracle = brute_conditional(p, i)
            for s in states_of((2, 3, 2)):
                y = evaluate_source(net.nodes[i].source, s)
                assert net.nodes[i].table.rows[y, s[i]] == pytest.approx(oracle[s], abs=1e-14)
        assert fc_limit(p, net) == pytest.approx(0.0, abs=1e-14)

    def test_zero_context_flagged(self):
        p = DenseDistribution(VariableSpace((2, 2)), [0.5, 0.5, 0, 0])
        net, flags = genuine_gibbs_network(p, return_flags=True)
        assert flags == {0: [1]}
        np.testing.assert_array_equal(net.nodes[0].table.rows[1], [0.5, 0.5])
        assert net.metadata["uniform_leaves"] == flags


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        net = random_network(rng, CARDS, max_ops=5).with_weights([0.1, 0.2, 0.3, 0.4])
        path = tmp_path / "m.json"
        save(net, path)
        back = load(path)
        assert back == net
        assert to_json(back) == to_json(net)

    def test_exact_floats(self):
        rows = np.array([[1 / 3, 2 / 3], [0.1, 0.9]])
        space = VariableSpace((2, 2))
        net = DependencyNetwork(
            space,
            (
                Node(InformationSource(0, (Split(0, 1),), space.cardinalities), ConditionalTable(0, rows)),
                Node(InformationSource(1, (), space.cardinalities), ConditionalTable(1, rows[:1])),
            ),
        )
        np.testing.assert_array_equal(from_json(to_json(net)).nodes[0].table.rows, rows)

    def _doc(self):
        net = genuine_gibbs_network(DenseDistribution.uniform(VariableSpace((2, 2))))
        return json.loads(to_json(net))

    def test_rejects_bad_row_sum(self):
        doc = self._doc()
        doc["nodes"][0]["table"][0] = [0.5, 0.48]
        with pytest.raises(ModelCorruptionError):
            from_json(json.dumps(doc))

    def test_rejects_degenerate_merge(self):
        doc = self._doc()
        doc["nodes"][0]["ops"].append({"op": "merge", "y0": 3, "y1": 3})
        with pytest.raises(ModelCorruptionError):
            from_json(json.dumps(doc))

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.update(version=2),
            lambda d: d.pop("weights"),
            lambda d: d.update(weights=[0.9, 0.9]),
            lambda d: d["nodes"][0]["ops"].append({"op": "rotate"}),
            lambda d: d["nodes"].reverse(),
        ],
    )
    def test_rejects_other_corruption(self, mutate):
        doc = self._doc()
        mutate(doc)
        with pytest.raises(ModelCorruptionError):
            from_json(json.dumps(doc))

    def test_rejects_garbage(self):
        with pytest.raises(ModelCorruptionError):
            from_json("{not json")
