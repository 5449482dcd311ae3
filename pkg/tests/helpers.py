"""Builders shared by the search tests and the acceptance suite."""
import numpy as np

from forestaudit.ensemble import VotingEnsemble
from forestaudit.schema import count_features_schema
from forestaudit.tree import DecisionNode, Leaf

TINY_SCHEMA = count_features_schema(["flow_a", "flow_b", "flow_c"])
TINY_GRID_MAX = 12


def random_tiny_tree(rng, labels, depth_left):
    if depth_left == 0 or rng.random() < 0.35:
        return Leaf(str(rng.choice(labels)))
    return DecisionNode(int(rng.integers(0, 3)), float(rng.integers(0, 11)),
                        random_tiny_tree(rng, labels, depth_left - 1),
                        random_tiny_tree(rng, labels, depth_left - 1))


def random_tiny_ensemble(rng) -> VotingEnsemble:
    """Up to three trees of depth <= 3 over three packet-count features."""
    labels = ["cam", "hub"] if rng.random() < 0.5 else ["cam", "hub", "tv"]
    n_trees = int(rng.integers(1, 4))
    trees = [random_tiny_tree(rng, labels, 3) for _ in range(n_trees)]
    return VotingEnsemble(TINY_SCHEMA, labels, trees, [1.0 / n_trees] * n_trees)


def tiny_grid(grid_max: int = TINY_GRID_MAX) -> np.ndarray:
    r = np.arange(grid_max + 1)
    return np.array(np.meshgrid(r, r, r, indexing="ij")).reshape(3, -1).T


def adversarial_grid_points(ensemble, rule_intervals, target, t_d,
                            grid_max: int = TINY_GRID_MAX) -> np.ndarray:
    """Every integer grid point inside the rules that the ensemble labels
    as the target with a qualifying score. Exhaustive ground truth."""
    pts = tiny_grid(grid_max)
    mask = np.ones(len(pts), dtype=bool)
    for i, iv in enumerate(rule_intervals):
        mask &= (pts[:, i] > iv.lo) & (pts[:, i] <= iv.hi)
    pts = pts[mask]
    if not len(pts):
        return pts
    labels, scores = ensemble.predict_batch(pts.astype(float))
    hit = np.array([lab == target and sc >= t_d
                    for lab, sc in zip(labels, scores)], dtype=bool)
    return pts[hit]
