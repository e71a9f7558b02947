"""Binary decision trees with exact branch-trace emission.

The single comparison convention used everywhere in this package:
``x[feature] > threshold`` sends the input to the *left* child (trace
bit 0), anything else (including equality) goes *right* (trace bit 1).
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional, Sequence

from .errors import (
    DimensionMismatchError,
    InfeasibleGridError,
    MalformedTreeError,
    SchemaError,
)

LEFT = 0
RIGHT = 1


class BranchTrace:
    """Ordered left/right decisions of one inference run.

    Bit ``i`` is the decision taken at depth ``i``; 0 means left,
    1 means right. The length equals the depth of the reached leaf.
    """

    __slots__ = ("bits",)

    def __init__(self, bits: Sequence[int] = ()):
        bits = tuple(int(b) for b in bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"trace bits must be 0 or 1, got {bits!r}")
        self.bits = bits

    @classmethod
    def from_text(cls, text: str) -> "BranchTrace":
        try:
            return cls("LR".index(c) for c in text)
        except ValueError:
            raise ValueError(f"trace text may only contain L/R, got {text!r}")

    def to_text(self) -> str:
        return "".join("LR"[b] for b in self.bits)

    def __len__(self) -> int:
        return len(self.bits)

    def __iter__(self) -> Iterator[int]:
        return iter(self.bits)

    def __getitem__(self, index):
        return self.bits[index]

    def __eq__(self, other) -> bool:
        if isinstance(other, BranchTrace):
            return self.bits == other.bits
        if isinstance(other, (tuple, list)):
            return self.bits == tuple(other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.bits)

    def __repr__(self) -> str:
        return f"BranchTrace({self.to_text()!r})"


@dataclass
class TreeNode:
    """One node of a binary decision tree.

    A node is a leaf iff ``value`` is set; inner nodes carry a feature
    index and threshold plus both children.
    """

    id: int = -1
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: object = None
    depth: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.value is not None


@dataclass
class DecisionTree:
    """A binary tree plus its feature count and per-feature value ranges."""

    root: TreeNode
    num_features: int
    ranges_low: list[float]
    ranges_high: list[float]

    def __post_init__(self):
        self.ranges_low = [float(v) for v in self.ranges_low]
        self.ranges_high = [float(v) for v in self.ranges_high]
        self.validate()

    def validate(self) -> None:
        if len(self.ranges_low) != self.num_features or len(self.ranges_high) != self.num_features:
            raise MalformedTreeError("feature ranges must have one entry per feature")
        seen: set[int] = set()
        for node, depth in self._walk(self.root, 0):
            if node.depth != depth:
                raise MalformedTreeError(
                    f"node {node.id}: stored depth {node.depth} != structural depth {depth}")
            if node.id in seen:
                raise MalformedTreeError(f"duplicate node id {node.id}")
            seen.add(node.id)
            if node.is_leaf:
                if node.feature is not None or node.threshold is not None \
                        or node.left is not None or node.right is not None:
                    raise MalformedTreeError(f"leaf {node.id} carries inner-node fields")
            else:
                if node.left is None or node.right is None:
                    raise MalformedTreeError(f"inner node {node.id} is missing a child")
                if node.feature is None or node.threshold is None:
                    raise MalformedTreeError(f"inner node {node.id} lacks feature/threshold")
                if not 0 <= node.feature < self.num_features:
                    raise MalformedTreeError(
                        f"node {node.id}: feature {node.feature} outside [0, {self.num_features})")
                lo, hi = self.ranges_low[node.feature], self.ranges_high[node.feature]
                if not lo <= node.threshold <= hi:
                    raise MalformedTreeError(
                        f"node {node.id}: threshold {node.threshold} outside range [{lo}, {hi}]")

    @staticmethod
    def _walk(node: TreeNode, depth: int):
        yield node, depth
        if node.left is not None:
            yield from DecisionTree._walk(node.left, depth + 1)
        if node.right is not None:
            yield from DecisionTree._walk(node.right, depth + 1)

    def nodes(self) -> Iterator[TreeNode]:
        for node, _ in self._walk(self.root, 0):
            yield node

    def inner_nodes(self) -> list[TreeNode]:
        return [n for n in self.nodes() if not n.is_leaf]

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes() if n.is_leaf]

    def depth(self) -> int:
        return max(n.depth for n in self.leaves())


def assign_ids_breadth_first(root: TreeNode) -> None:
    """Number nodes 0, 1, 2, ... level by level. Purely cosmetic."""
    queue = [root]
    next_id = 0
    while queue:
        node = queue.pop(0)
        node.id = next_id
        next_id += 1
        if node.left is not None:
            queue.append(node.left)
        if node.right is not None:
            queue.append(node.right)


def infer_with_trace(tree: DecisionTree, x: Sequence[float]) -> tuple[object, BranchTrace]:
    """Run one inference and return (leaf value, branch trace).

    Strict comparison: ``x[f] > t`` takes the left child (bit 0),
    ``x[f] <= t`` the right child (bit 1).
    """
    if len(x) != tree.num_features:
        raise DimensionMismatchError(
            f"input has {len(x)} features, tree expects {tree.num_features}")
    node = tree.root
    bits: list[int] = []
    while not node.is_leaf:
        if x[node.feature] > node.threshold:
            bits.append(LEFT)
            node = node.left
        else:
            bits.append(RIGHT)
            node = node.right
        if node is None:
            raise MalformedTreeError("dangling child during inference")
    return node.value, BranchTrace(bits)


def infer(tree: DecisionTree, x: Sequence[float]) -> object:
    """Run one inference and return only the leaf value."""
    return infer_with_trace(tree, x)[0]


def replay_trace(tree: DecisionTree, trace: BranchTrace) -> TreeNode:
    """Walk the tree by a trace's bits and return the node reached."""
    node = tree.root
    for bit in trace:
        node = node.left if bit == LEFT else node.right
        if node is None:
            raise MalformedTreeError("trace walks off the tree")
    return node


class TreeDiff(NamedTuple):
    equal: bool
    first_mismatch: Optional[str]


def tree_equal(a: DecisionTree, b: DecisionTree, threshold_tol: float = 0.0) -> TreeDiff:
    """Structural comparison: same topology by left/right position, exact
    features and leaf values, thresholds within ``threshold_tol``."""
    if a.num_features != b.num_features:
        return TreeDiff(False, f"num_features {a.num_features} vs {b.num_features}")

    def compare(na: TreeNode, nb: TreeNode, path: str) -> Optional[str]:
        where = f"node at path '{path or 'root'}'"
        if na.is_leaf != nb.is_leaf:
            return f"{where}: leaf vs inner"
        if na.is_leaf:
            if type(na.value) is not type(nb.value) or na.value != nb.value:
                return f"{where}: leaf value {na.value!r} vs {nb.value!r}"
            return None
        if na.feature != nb.feature:
            return f"{where}: feature {na.feature} vs {nb.feature}"
        if abs(na.threshold - nb.threshold) > threshold_tol:
            return f"{where}: threshold {na.threshold} vs {nb.threshold}"
        return (compare(na.left, nb.left, path + "L")
                or compare(na.right, nb.right, path + "R"))

    mismatch = compare(a.root, b.root, "")
    return TreeDiff(mismatch is None, mismatch)


def min_path_separation(tree: DecisionTree) -> float:
    """Smallest per-feature gap between thresholds sharing a root-to-node
    path, and between any threshold and its feature's range limits.

    Extraction at resolution epsilon is exact when this exceeds epsilon;
    use it to pick epsilon for trained trees.
    """
    best = math.inf

    def descend(node: TreeNode, path: list[tuple[int, float]]):
        nonlocal best
        if node.is_leaf:
            return
        f, t = node.feature, node.threshold
        best = min(best, t - tree.ranges_low[f], tree.ranges_high[f] - t)
        for pf, pt in path:
            if pf == f:
                best = min(best, abs(t - pt))
        path.append((f, t))
        descend(node.left, path)
        descend(node.right, path)
        path.pop()

    descend(tree.root, [])
    return best


def generate_random_tree(
    num_features: int,
    depth_min: int,
    depth_max: int,
    ranges: Sequence[tuple[float, float]],
    threshold_grid: float,
    seed: int,
    regression: bool = False,
    split_prob: float = 0.6,
) -> DecisionTree:
    """Sample a random tree with grid-aligned, well-separated thresholds.

    Thresholds live on the per-feature grid ``low + k * threshold_grid``,
    strictly inside the feature range, and any two thresholds sharing a
    feature on a root-to-node path differ by more than ``threshold_grid``.
    Every node's threshold is also strictly inside the interval its
    ancestors leave reachable, so no branch is dead. Leaf values are
    distinct (integers, or reals in regression mode). Deterministic
    under ``seed``.
    """
    if threshold_grid <= 0:
        raise ValueError("threshold_grid must be positive")
    if depth_min < 1 or depth_max < depth_min:
        raise ValueError("need 1 <= depth_min <= depth_max")
    if len(ranges) != num_features:
        raise ValueError("one (low, high) pair per feature required")
    for lo, hi in ranges:
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"invalid feature range ({lo}, {hi})")

    rng = random.Random(seed)
    grid = float(threshold_grid)
    # Largest grid index whose threshold keeps a one-step margin to the
    # upper range limit; index 0 is the lower limit itself and excluded.
    k_max = [int(math.floor((hi - lo) / grid + 1e-9)) - 1 for lo, hi in ranges]
    if any(k < 1 for k in k_max):
        raise InfeasibleGridError("no grid point strictly inside some feature range")

    leaf_counter = 0
    used_values: set[float] = set()

    def next_leaf_value() -> object:
        nonlocal leaf_counter
        if not regression:
            value = leaf_counter
            leaf_counter += 1
            return value
        while True:
            value = round(rng.uniform(0.0, 1000.0), 6)
            if value not in used_values:
                used_values.add(value)
                return float(value)

    def feasible_indices(f: int, bounds: dict[int, tuple[int, int]]) -> range:
        klo, khi = bounds.get(f, (0, k_max[f] + 1))
        # Two grid steps from path-threshold bounds keeps separation
        # strictly above one grid unit; range limits need only one step.
        lo_k = klo + 2 if klo > 0 else 1
        hi_k = khi - 2 if khi <= k_max[f] else k_max[f]
        return range(lo_k, hi_k + 1)

    def build(depth: int, bounds: dict[int, tuple[int, int]]) -> TreeNode:
        must_split = depth < depth_min
        may_split = depth < depth_max
        want_split = must_split or (may_split and rng.random() < split_prob)
        if want_split:
            features = list(range(num_features))
            rng.shuffle(features)
            for f in features:
                candidates = feasible_indices(f, bounds)
                if len(candidates) == 0:
                    continue
                if must_split and len(candidates) > 4:
                    # Mandatory splits stay near the interval center so both
                    # children keep workable grid intervals on deep trees.
                    mid = len(candidates) // 2
                    k = candidates[mid + rng.randint(-1, 1)]
                else:
                    k = rng.choice(candidates)
                lo, _ = ranges[f]
                node = TreeNode(feature=f, threshold=lo + k * grid, depth=depth)
                klo, khi = bounds.get(f, (0, k_max[f] + 1))
                bounds[f] = (k, khi)          # left keeps x > t
                node.left = build(depth + 1, bounds)
                bounds[f] = (klo, k)          # right keeps x <= t
                node.right = build(depth + 1, bounds)
                bounds[f] = (klo, khi)
                return node
            if must_split:
                raise InfeasibleGridError(
                    f"no feasible split at depth {depth}: grid exhausted on every feature")
        return TreeNode(value=next_leaf_value(), depth=depth)

    root = build(0, {})
    assign_ids_breadth_first(root)
    return DecisionTree(
        root=root,
        num_features=num_features,
        ranges_low=[lo for lo, _ in ranges],
        ranges_high=[hi for _, hi in ranges],
    )


def tree_to_dict(tree: DecisionTree) -> dict:
    nodes = []
    for node in tree.nodes():
        nodes.append({
            "id": node.id,
            "feature": node.feature,
            "threshold": node.threshold,
            "left": node.left.id if node.left is not None else None,
            "right": node.right.id if node.right is not None else None,
            "value": node.value,
        })
    nodes.sort(key=lambda d: d["id"])
    return {
        "num_features": tree.num_features,
        "ranges_low": tree.ranges_low,
        "ranges_high": tree.ranges_high,
        "nodes": nodes,
        "root": tree.root.id,
    }


def tree_from_dict(data: dict) -> DecisionTree:
    if not isinstance(data, dict):
        raise SchemaError("tree document must be a JSON object")
    for key in ("num_features", "ranges_low", "ranges_high", "nodes", "root"):
        if key not in data:
            raise SchemaError(f'missing required key "{key}"', field=key)
    by_id: dict[int, TreeNode] = {}
    raw_nodes = data["nodes"]
    for i, raw in enumerate(raw_nodes):
        for key in ("id", "feature", "threshold", "left", "right", "value"):
            if key not in raw:
                raise SchemaError(f'node {i}: missing key "{key}"', field=key)
        node = TreeNode(
            id=int(raw["id"]),
            feature=None if raw["feature"] is None else int(raw["feature"]),
            threshold=None if raw["threshold"] is None else float(raw["threshold"]),
            value=raw["value"],
        )
        if node.id in by_id:
            raise SchemaError(f"duplicate node id {node.id}", field="id")
        by_id[node.id] = node
    for raw in raw_nodes:
        node = by_id[int(raw["id"])]
        for side in ("left", "right"):
            child_id = raw[side]
            if child_id is not None:
                if child_id not in by_id:
                    raise SchemaError(f"node {node.id}: unknown {side} child {child_id}",
                                      field=side)
                setattr(node, side, by_id[child_id])
    root_id = data["root"]
    if root_id not in by_id:
        raise SchemaError(f'"root" references unknown node {root_id}', field="root")
    root = by_id[root_id]

    def fix_depths(node: TreeNode, depth: int):
        node.depth = depth
        for child in (node.left, node.right):
            if child is not None:
                fix_depths(child, depth + 1)

    fix_depths(root, 0)
    return DecisionTree(
        root=root,
        num_features=int(data["num_features"]),
        ranges_low=list(data["ranges_low"]),
        ranges_high=list(data["ranges_high"]),
    )


def save_tree(tree: DecisionTree, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tree_to_dict(tree), fh, indent=2)
        fh.write("\n")


def load_tree(path) -> DecisionTree:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    return tree_from_dict(data)
