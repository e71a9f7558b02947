"""Shared fixtures: the worked-example target tree and corpus helpers."""
from __future__ import annotations

import math
import random

import pytest

from treestealer.trees import (
    DecisionTree,
    TreeNode,
    assign_ids_breadth_first,
    generate_random_tree,
)


def leaf(value, depth):
    return TreeNode(value=value, depth=depth)


def inner(feature, threshold, depth, left, right):
    node = TreeNode(feature=feature, threshold=threshold, depth=depth)
    node.left = left
    node.right = right
    return node


def build_example_target() -> DecisionTree:
    """Two-feature target with ranges [2,7] x [-2,3].

    Root checks feature 0 at 3.094, its left child checks feature 1, and
    the right-hand path checks feature 1 three times (-0.906 at depth 1,
    1.906 at depth 2, and again at depth 3), exercising duplicated-feature
    extraction.
    """
    n8 = inner(1, 0.094, 3, leaf(3, 4), leaf(4, 4))
    n3 = inner(1, 1.906, 2, leaf(2, 3), n8)
    n2 = inner(1, -0.906, 1, n3, leaf(5, 2))
    n1 = inner(1, 0.594, 1, leaf(0, 2), leaf(1, 2))
    root = inner(0, 3.094, 0, n1, n2)
    assign_ids_breadth_first(root)
    return DecisionTree(root=root, num_features=2,
                        ranges_low=[2, -2], ranges_high=[7, 3])


@pytest.fixture
def example_target() -> DecisionTree:
    return build_example_target()


def random_grid_corpus(count, seed, m_range=(2, 8), depth_range=(2, 9),
                       width=8.0, grid=0.5, split_prob=0.5):
    """Deterministic corpus of grid-threshold trees for recovery tests."""
    rng = random.Random(seed)
    corpus = []
    while len(corpus) < count:
        m = rng.randint(*m_range)
        depth_max = rng.randint(*depth_range)
        depth_min = min(2, depth_max)
        tree_seed = rng.randrange(2 ** 31)
        tree = generate_random_tree(
            m, depth_min, depth_max, [(0.0, width)] * m, grid, tree_seed,
            split_prob=split_prob)
        corpus.append(tree)
    return corpus


def query_upper_bound(tree: DecisionTree, epsilon: float) -> int:
    """1 + sum over inner nodes of (m + ceil(log2(width/eps)) + 2)."""
    m = tree.num_features
    total = 1
    for node in tree.inner_nodes():
        width = tree.ranges_high[node.feature] - tree.ranges_low[node.feature]
        total += m + math.ceil(math.log2(width / epsilon)) + 2
    return total
