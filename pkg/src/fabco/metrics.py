"""Trajectory metrics: Hausdorff and dynamic-time-warping distances.

Both operate on xyz positions only; mixing radians into a length metric
would be dimensionally incoherent. The DTW path cost is the unnormalized
sum of Euclidean point costs with no window constraint.
"""

from __future__ import annotations

import numpy as np


def _positions(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("need a non-empty (N, d) position array")
    return arr[:, :3] if arr.shape[1] >= 3 else arr


def hausdorff_distance(a, b) -> float:
    """max(sup_a inf_b, sup_b inf_a) of Euclidean distances over xyz points."""
    pa, pb = _positions(a), _positions(b)
    # pairwise distances in manageable blocks
    best_ab = np.full(pa.shape[0], np.inf)
    best_ba = np.full(pb.shape[0], np.inf)
    block = 2048
    for i in range(0, pa.shape[0], block):
        chunk = pa[i:i + block]
        d = np.sqrt(((chunk[:, None, :] - pb[None, :, :]) ** 2).sum(-1))
        best_ab[i:i + block] = d.min(axis=1)
        best_ba = np.minimum(best_ba, d.min(axis=0))
    return float(max(best_ab.max(), best_ba.max()))


def dtw_distance(a, b) -> float:
    """Classic DTW with Euclidean point cost; monotone alignment, summed cost."""
    pa, pb = _positions(a), _positions(b)
    n, m = pa.shape[0], pb.shape[0]
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cost_row = np.sqrt(((pa[i - 1][None, :] - pb) ** 2).sum(-1))
        cur = np.full(m + 1, np.inf)
        for j in range(1, m + 1):
            cur[j] = cost_row[j - 1] + min(prev[j], prev[j - 1], cur[j - 1])
        prev = cur
    return float(prev[m])


def downsample(points: np.ndarray, max_len: int = 256) -> np.ndarray:
    """Uniform-stride subsample keeping first and last points."""
    pts = np.asarray(points)
    if pts.shape[0] <= max_len:
        return pts
    idx = np.linspace(0, pts.shape[0] - 1, max_len).round().astype(int)
    return pts[idx]
