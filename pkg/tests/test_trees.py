import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treestealer.errors import InfeasibleGridError, MalformedTreeError, SchemaError
from treestealer.trees import (
    BranchTrace,
    DecisionTree,
    TreeNode,
    assign_ids_breadth_first,
    generate_random_tree,
    infer,
    infer_with_trace,
    load_tree,
    min_path_separation,
    replay_trace,
    save_tree,
    tree_equal,
    tree_to_dict,
)

from conftest import build_example_target, inner, leaf


class TestInference:
    def test_example_initial_input_goes_leftmost(self, example_target):
        label, trace = infer_with_trace(example_target, [7, 3])
        assert label == 0
        assert trace == BranchTrace([0, 0])
        assert infer(example_target, [7, 3]) == 0

    def test_single_leaf_tree(self):
        tree = DecisionTree(root=leaf(42, 0), num_features=1,
                            ranges_low=[0], ranges_high=[1])
        label, trace = infer_with_trace(tree, [0.5])
        assert label == 42
        assert len(trace) == 0

    def test_boundary_input_goes_right(self):
        root = inner(0, 5.0, 0, leaf(1, 1), leaf(2, 1))
        assign_ids_breadth_first(root)
        tree = DecisionTree(root=root, num_features=1,
                            ranges_low=[0], ranges_high=[10])
        label, trace = infer_with_trace(tree, [5.0])
        assert trace == BranchTrace([1])
        assert label == 2

    def test_dimension_mismatch(self, example_target):
        with pytest.raises(Exception, match="features"):
            infer(example_target, [1.0])

    def test_infer_agrees_with_traced_inference(self):
        tree = generate_random_tree(4, 2, 6, [(0, 8)] * 4, 0.5, seed=11)
        rng = random.Random(3)
        for _ in range(1000):
            x = [rng.uniform(0, 8) for _ in range(4)]
            label, trace = infer_with_trace(tree, x)
            assert infer(tree, x) == label
            reached = replay_trace(tree, trace)
            assert reached.is_leaf and reached.value == label

    def test_trace_length_within_leaf_depth_band(self):
        tree = generate_random_tree(3, 2, 6, [(0, 8)] * 3, 0.5, seed=5)
        depths = [l.depth for l in tree.leaves()]
        rng = random.Random(9)
        for _ in range(200):
            x = [rng.uniform(0, 8) for _ in range(3)]
            _, trace = infer_with_trace(tree, x)
            assert min(depths) <= len(trace) <= max(depths)


class TestBranchTrace:
    def test_text_round_trip(self):
        trace = BranchTrace([0, 1, 0])
        assert trace.to_text() == "LRL"
        assert BranchTrace.from_text("LRL") == trace
        assert BranchTrace.from_text("") == BranchTrace([])

    def test_rejects_non_bits(self):
        with pytest.raises(ValueError):
            BranchTrace([0, 2])

    @given(st.lists(st.integers(0, 1), max_size=32))
    def test_text_round_trip_property(self, bits):
        trace = BranchTrace(bits)
        assert BranchTrace.from_text(trace.to_text()) == trace


class TestGenerateRandomTree:
    def test_forced_grid_shape(self):
        tree = generate_random_tree(2, 2, 2, [(0, 1), (0, 1)], 0.25, seed=1)
        assert len(tree.inner_nodes()) == 3
        assert len(tree.leaves()) == 4
        assert all(n.threshold in (0.25, 0.5, 0.75) for n in tree.inner_nodes())

    def test_deterministic_under_seed(self):
        a = generate_random_tree(3, 2, 5, [(0, 8)] * 3, 0.5, seed=7)
        b = generate_random_tree(3, 2, 5, [(0, 8)] * 3, 0.5, seed=7)
        assert json.dumps(tree_to_dict(a)) == json.dumps(tree_to_dict(b))

    def test_path_separation_exceeds_grid(self):
        tree = generate_random_tree(3, 3, 5, [(0, 8)] * 3, 0.5, seed=7)

        def walk(node, path):
            if node.is_leaf:
                return
            for f, t in path:
                if f == node.feature:
                    assert abs(t - node.threshold) > 0.5
            walk(node.left, path + [(node.feature, node.threshold)])
            walk(node.right, path + [(node.feature, node.threshold)])

        walk(tree.root, [])
        # Range-limit distance may be exactly one grid step.
        assert min_path_separation(tree) >= 0.5 - 1e-9

    def test_leaf_values_distinct(self):
        tree = generate_random_tree(2, 2, 4, [(0, 8)] * 2, 0.5, seed=2)
        values = [l.value for l in tree.leaves()]
        assert len(values) == len(set(values))
        regression = generate_random_tree(2, 2, 4, [(0, 8)] * 2, 0.5, seed=2,
                                          regression=True)
        rvalues = [l.value for l in regression.leaves()]
        assert all(isinstance(v, float) for v in rvalues)
        assert len(rvalues) == len(set(rvalues))

    def test_infeasible_grid(self):
        with pytest.raises(InfeasibleGridError):
            generate_random_tree(1, 4, 4, [(0, 1)], 0.25, seed=0)

    def test_leaf_depths_within_band(self):
        tree = generate_random_tree(3, 3, 5, [(0, 8)] * 3, 0.5, seed=13)
        assert all(3 <= l.depth <= 5 for l in tree.leaves())


class TestTreeEqual:
    def test_reflexive(self, example_target):
        assert tree_equal(example_target, example_target, 0.0).equal

    def test_leaf_label_mismatch_located(self, example_target):
        other = build_example_target()
        other.root.left.left.value = 99
        diff = tree_equal(example_target, other, 0.0)
        assert not diff.equal
        assert "LL" in diff.first_mismatch and "99" in diff.first_mismatch

    def test_threshold_tolerance(self, example_target):
        other = build_example_target()
        other.root.threshold = 3.094 + 0.2
        assert tree_equal(example_target, other, 0.25).equal
        assert not tree_equal(example_target, other, 0.1).equal


class TestSerialization:
    def test_round_trip(self, tmp_path):
        tree = generate_random_tree(3, 2, 4, [(0, 8)] * 3, 0.5, seed=3)
        path = tmp_path / "t.json"
        save_tree(tree, path)
        again = load_tree(path)
        assert tree_equal(tree, again, 0.0).equal

    def test_missing_root_key(self, tmp_path):
        path = tmp_path / "broken.json"
        doc = tree_to_dict(build_example_target())
        del doc["root"]
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="root"):
            load_tree(path)

    def test_hand_written_example_tree(self, tmp_path, example_target):
        path = tmp_path / "example.json"
        save_tree(example_target, path)
        loaded = load_tree(path)
        assert infer(loaded, [7, 3]) == 0

    def test_leaf_value_types_survive(self, tmp_path):
        tree = generate_random_tree(2, 2, 3, [(0, 8)] * 2, 0.5, seed=4,
                                    regression=True)
        path = tmp_path / "r.json"
        save_tree(tree, path)
        again = load_tree(path)
        assert all(isinstance(l.value, float) for l in again.leaves())
        assert tree_equal(tree, again, 0.0).equal

    def test_validation_rejects_dangling_child(self):
        node = TreeNode(feature=0, threshold=0.5, depth=0)
        node.left = leaf(1, 1)
        with pytest.raises(MalformedTreeError):
            DecisionTree(root=node, num_features=1, ranges_low=[0], ranges_high=[1])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), data=st.data())
def test_trace_replay_property(seed, data):
    tree = generate_random_tree(2, 1, 4, [(0, 8), (0, 8)], 0.5, seed=seed)
    x = [data.draw(st.floats(0, 8, allow_nan=False)) for _ in range(2)]
    label, trace = infer_with_trace(tree, x)
    node = tree.root
    for bit in trace:
        assert not node.is_leaf
        expected = 0 if x[node.feature] > node.threshold else 1
        assert bit == expected
        node = node.left if bit == 0 else node.right
    assert node.is_leaf and node.value == label
