"""Decision tree nodes for hard-voting ensembles.

Routing convention: ``x[feature] <= threshold`` descends left, otherwise
right. Leaves may carry post-training guards; a guard fires when
``x[feature] > threshold`` and diverts the leaf's vote to the ensemble's
anomaly sentinel instead of the trained label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Union

GUARD_ESSENTIAL = "essential"
GUARD_ADDITIONAL = "additional"


@dataclass(frozen=True)
class Guard:
    feature: int
    threshold: float
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in (GUARD_ESSENTIAL, GUARD_ADDITIONAL):
            raise ValueError(f"unknown guard kind {self.kind!r}")


@dataclass(frozen=True)
class Leaf:
    label: str
    guards: tuple[Guard, ...] = ()


@dataclass(frozen=True)
class DecisionNode:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[DecisionNode, Leaf]


def route(node: Node, x) -> Leaf:
    """Follow the split conditions down to the leaf for instance ``x``."""
    while isinstance(node, DecisionNode):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node


@dataclass(frozen=True)
class PathCondition:
    """One branch decision: feature <= threshold (left) or > threshold."""

    feature: int
    is_left: bool
    threshold: float


def iter_paths(root: Node) -> Iterator[tuple[str, tuple[PathCondition, ...], Leaf]]:
    """Pre-order traversal yielding (path_id, conditions, leaf) per leaf.

    path_id is the branch string from the root, e.g. "LRL"; the root leaf
    of a stump has path_id "".
    """
    stack: list[tuple[Node, str, tuple[PathCondition, ...]]] = [(root, "", ())]
    while stack:
        node, path, conds = stack.pop()
        if isinstance(node, Leaf):
            yield path, conds, node
            continue
        right = conds + (PathCondition(node.feature, False, node.threshold),)
        left = conds + (PathCondition(node.feature, True, node.threshold),)
        stack.append((node.right, path + "R", right))
        stack.append((node.left, path + "L", left))


def map_leaves(root: Node, fn: Callable[[str, tuple[PathCondition, ...], Leaf], Leaf]) -> Node:
    """Rebuild a tree with every leaf replaced by fn(path_id, conditions, leaf)."""

    def rebuild(node: Node, path: str, conds: tuple[PathCondition, ...]) -> Node:
        if isinstance(node, Leaf):
            return fn(path, conds, node)
        left = rebuild(node.left, path + "L",
                       conds + (PathCondition(node.feature, True, node.threshold),))
        right = rebuild(node.right, path + "R",
                        conds + (PathCondition(node.feature, False, node.threshold),))
        return DecisionNode(node.feature, node.threshold, left, right)

    return rebuild(root, "", ())


def tree_depth(root: Node) -> int:
    if isinstance(root, Leaf):
        return 0
    return 1 + max(tree_depth(root.left), tree_depth(root.right))


def leaf_labels(root: Node) -> set[str]:
    return {leaf.label for _, _, leaf in iter_paths(root)}


def validate_tree(root: Node, n_features: int, where: str = "tree") -> None:
    """Structural checks: feature indices in range, sane guards."""
    stack: list[tuple[Node, str]] = [(root, where)]
    while stack:
        node, path = stack.pop()
        if isinstance(node, Leaf):
            for g in node.guards:
                if not (0 <= g.feature < n_features):
                    raise ValueError(f"{path}: guard feature {g.feature} out of range")
            continue
        if not (0 <= node.feature < n_features):
            raise ValueError(f"{path}: split feature {node.feature} out of range")
        stack.append((node.left, path + ".left"))
        stack.append((node.right, path + ".right"))
