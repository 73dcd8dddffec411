"""Layer selectivity: PCA of the voxels-by-layers performance matrix.

Per-layer encoding scores for well-predicted voxels are assembled into a
matrix C (V' x L), double-centered to remove additive voxel and layer
effects, and decomposed by SVD.  The first component's voxel scores give
a map of which depth of the model each voxel prefers; correlating that
map with baseline performance maps locates it on the processing
hierarchy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .util import pearson
from .varpart import VoxelScores


@dataclass
class PerfMatrix:
    """Per-layer scores restricted to voxels predicted above threshold."""

    c: np.ndarray                 # (V', L)
    voxel_index_map: np.ndarray   # (V',) original voxel ids
    threshold: float = 0.15


@dataclass
class PcaResult:
    scores: np.ndarray    # (V', K)
    loadings: np.ndarray  # (L, K), orthonormal columns
    varexp: np.ndarray    # (K,) fraction of total variance


def build_perf_matrix(scores_per_layer, threshold=0.15) -> PerfMatrix:
    """Stack per-layer VoxelScores, keeping voxels with mean rho > threshold.

    NaN scores (flagged voxels) are treated as failing the threshold.
    """
    if not scores_per_layer:
        raise ValueError("no layer scores given")
    rows = [np.asarray(s.rho if isinstance(s, VoxelScores) else s, float)
            for s in scores_per_layer]
    v = rows[0].size
    if any(r.size != v for r in rows):
        raise ValueError("layers disagree on voxel count")
    c_full = np.column_stack(rows)
    finite = np.isfinite(c_full).all(axis=1)
    mean_rho = np.full(v, -np.inf)
    mean_rho[finite] = c_full[finite].mean(axis=1)
    keep = mean_rho > threshold
    if not keep.any():
        raise ValueError(f"no voxels exceed mean rho > {threshold}")
    return PerfMatrix(c=c_full[keep], voxel_index_map=np.where(keep)[0],
                      threshold=threshold)


def double_center(c):
    """Remove grand, row, and column means (two-way ANOVA residual)."""
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] < 2 or c.shape[1] < 2:
        raise ValueError("need at least a 2x2 matrix")
    grand = c.mean()
    row = c.mean(axis=1, keepdims=True)
    col = c.mean(axis=0, keepdims=True)
    return c - row - col + grand


def pca_svd(c_centered, k=None) -> PcaResult:
    """SVD-based PCA of a centered matrix.

    Scores are U * S (voxel coordinates), loadings are the right singular
    vectors, and varexp is sigma_k^2 over the total.  For determinism the
    sign of each component is fixed so the largest-magnitude loading entry
    is positive.
    """
    c = np.asarray(c_centered, dtype=float)
    max_k = min(c.shape)
    if k is None:
        k = min(max_k, 10)
    if k > max_k:
        raise ValueError(f"K={k} exceeds min(V', L)={max_k}")
    u, s, vt = np.linalg.svd(c, full_matrices=False)
    total = (s * s).sum()
    varexp = (s * s) / total if total > 0 else np.zeros_like(s)
    scores = u[:, :k] * s[:k]
    loadings = vt[:k].T
    for j in range(k):
        pivot = np.argmax(np.abs(loadings[:, j]))
        if loadings[pivot, j] < 0:
            loadings[:, j] = -loadings[:, j]
            scores[:, j] = -scores[:, j]
    return PcaResult(scores=scores, loadings=loadings, varexp=varexp[:k])


def correlate_maps(pc_scores, voxel_index_map, other: VoxelScores,
                   restrict=None):
    """Pearson r between component scores and another performance map.

    ``pc_scores`` lives on the retained voxels (via ``voxel_index_map``);
    ``other`` is a full-length score vector.  ``restrict`` optionally
    limits the comparison to an ROI given as original voxel indices.
    """
    pc_scores = np.asarray(pc_scores, float)
    voxel_index_map = np.asarray(voxel_index_map, int)
    other_rho = np.asarray(other.rho if isinstance(other, VoxelScores)
                           else other, float)
    keep = np.ones(voxel_index_map.size, dtype=bool)
    if restrict is not None:
        roi = set(int(i) for i in restrict)
        keep = np.array([int(i) in roi for i in voxel_index_map])
    vals = other_rho[voxel_index_map[keep]]
    sel = np.isfinite(vals)
    if sel.sum() < 3:
        raise ValueError("fewer than 3 overlapping voxels")
    return pearson(pc_scores[keep][sel], vals[sel])
