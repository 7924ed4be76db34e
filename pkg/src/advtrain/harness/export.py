"""Victim action-vector export, 2-D PCA projection and coverage area."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from advtrain.errors import UsageError

ACTION_COLUMNS = ("method", "seed", "episode", "step", "accel", "steer")
PROJECTION_COLUMNS = ("method", "seed", "episode", "step", "pc1", "pc2")


@dataclass(frozen=True)
class Pca:
    mean: np.ndarray
    components: np.ndarray  # (k, d), rows are unit directions
    explained_variance_ratio: np.ndarray

    def project(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T


def fit_pca(x, n_components=2):
    """Principal axes via SVD of the centred data.

    Component signs are fixed so the largest-magnitude entry of each row is
    positive; this keeps exports stable across reruns.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise UsageError("PCA needs a non-empty 2-D array")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    var = s * s
    total = var.sum()
    ratio = var / total if total > 0 else np.zeros_like(var)
    k = min(n_components, vt.shape[0])
    comps = vt[:k].copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    if k < n_components:
        comps = np.vstack([comps, np.zeros((n_components - k, x.shape[1]))])
        ratio = np.concatenate([ratio, np.zeros(n_components - k)])
    return Pca(mean, comps, ratio[:n_components])


def hull_area(points):
    """Area of the convex hull of 2-D points; 0 for degenerate sets."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) < 3:
        return 0.0
    try:
        # for 2-D input, ConvexHull.volume is the enclosed area
        return float(ConvexHull(pts).volume)
    except QhullError:
        return 0.0


def _rows(trajectories):
    """Flatten ``{(method, seed): [episode actions arrays]}`` into labelled rows."""
    labels, actions = [], []
    for (method, seed), episodes in trajectories.items():
        for ep, acts in enumerate(episodes):
            acts = np.asarray(acts, dtype=np.float64).reshape(-1, 2)
            for t, a in enumerate(acts):
                labels.append((method, seed, ep, t))
                actions.append(a)
    return labels, np.asarray(actions).reshape(-1, 2)


def export_actions(trajectories, out_dir, pca=None):
    """Write ``actions.csv``, ``pca.csv`` and return a summary dict.

    ``trajectories`` maps ``(method, seed)`` to a list of per-episode victim
    action arrays. One PCA basis is fitted on all rows (or ``pca`` is used)
    so projections of different methods share axes; the summary reports the
    hull area of each group's projected points.
    """
    labels, actions = _rows(trajectories)
    if not labels:
        raise UsageError("export_actions needs at least one recorded action")
    pca = fit_pca(actions) if pca is None else pca
    proj = pca.project(actions)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "actions.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ACTION_COLUMNS)
        for lab, a in zip(labels, actions):
            w.writerow([*lab, repr(float(a[0])), repr(float(a[1]))])
    with open(out_dir / "pca.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(PROJECTION_COLUMNS)
        for lab, p in zip(labels, proj):
            w.writerow([*lab, repr(float(p[0])), repr(float(p[1]))])
    areas = {}
    keys = np.array([f"{m}/{s}" for m, s, _, _ in labels])
    for key in dict.fromkeys(keys):
        areas[key] = hull_area(proj[keys == key])
    return {
        "n_rows": len(labels),
        "explained_variance_ratio": [float(r) for r in pca.explained_variance_ratio],
        "components": pca.components.tolist(),
        "hull_area": areas,
    }
