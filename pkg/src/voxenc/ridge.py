"""Ridge regression with per-voxel regularization chosen by chunked CV.

The solver computes one SVD per training fold and reuses it for the whole
regularization path: with X = U S Vt, the penalized solution for any
lambda is V diag(s / (s^2 + lambda)) U' Y, identical to the
normal-equations solve (X'X + lambda I)^-1 X' Y.

Cross-validation holds out contiguous chunks of TRs (fMRI noise is
auto-correlated, so random rows would leak), scores held-out Pearson
correlation per voxel, and picks each voxel's lambda independently.

Banded ridge over two feature-space bands reuses the same machinery via
an exact reparameterization: scaling band i by 1/sqrt(lambda_i) and
solving a single ridge at lambda = 1 gives the banded solution, so a
grid over (lambda_1, lambda_2) only needs one SVD per distinct ratio
lambda_2 / lambda_1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import FeatureMatrix, write_matrix, read_matrix
from .util import pearson_columns, rng_from, thread_map

DEFAULT_GRID = tuple(np.logspace(-2, 5, 15))


@dataclass
class CvPlan:
    """Chunked cross-validation schedule."""

    n_iterations: int = 50
    n_chunks: int = 40
    chunk_len_tr: int = 10
    seed: int = 0

    def validate(self, t_train):
        held = self.n_chunks * self.chunk_len_tr
        if held >= 0.5 * t_train:
            raise ValueError(
                f"plan holds out {held} of {t_train} TRs (>= 50%)")
        if t_train // self.chunk_len_tr < self.n_chunks:
            raise ValueError("cannot place chunks disjointly")


@dataclass
class BandedConfig:
    """Two-band search: column slices plus a per-band lambda grid."""

    band_slices: tuple  # ((start, stop), (start, stop))
    grid1: tuple = tuple(np.logspace(-2, 5, 10))
    grid2: tuple = tuple(np.logspace(-2, 5, 10))

    def __post_init__(self):
        if len(self.band_slices) != 2:
            raise ValueError("exactly two bands are supported")
        (a0, a1), (b0, b1) = self.band_slices
        if a1 <= a0 or b1 <= b0 or a1 != b0 or a0 != 0:
            raise ValueError("band slices must partition the columns")
        if not len(self.grid1) or not len(self.grid2):
            raise ValueError("empty lambda grid")


@dataclass
class RidgeFit:
    """Fitted weights plus the CV record that produced them."""

    weights: np.ndarray          # (P_delayed, V)
    lambda_per_voxel: np.ndarray  # (V,)
    cv_curve: np.ndarray         # (n_grid, V) mean held-out correlation
    grid: np.ndarray
    seed: int
    lambda_index: np.ndarray = None
    flagged: np.ndarray = None    # degenerate voxels (zero-variance folds)
    best_cv: np.ndarray = None    # per-voxel CV correlation at chosen lambda
    lambda2_per_voxel: np.ndarray = None  # banded fits only
    band_slices: tuple = None

    @property
    def n_voxels(self):
        return self.weights.shape[1]


def sample_chunks(t_train, plan: CvPlan, iteration):
    """Disjoint held-out chunks for one CV iteration.

    Chunks are contiguous runs of ``chunk_len_tr`` TRs on a fixed grid;
    the draw is deterministic given (seed, iteration).
    Returns a sorted list of (start, stop) ranges.
    """
    plan.validate(t_train)
    n_blocks = t_train // plan.chunk_len_tr
    rng = rng_from(plan.seed, iteration)
    chosen = rng.choice(n_blocks, size=plan.n_chunks, replace=False)
    chosen.sort()
    return [(int(b) * plan.chunk_len_tr, (int(b) + 1) * plan.chunk_len_tr)
            for b in chosen]


def _held_mask(t_train, ranges):
    mask = np.zeros(t_train, dtype=bool)
    for lo, hi in ranges:
        mask[lo:hi] = True
    return mask


def svd_ridge_path(x, y, grid):
    """Weights for every lambda on the grid from a single SVD of X.

    Returns an array of shape (len(grid), P, V).  Each slice equals the
    dense normal-equations solution at that lambda.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    grid = np.asarray(grid, float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("X and Y must be 2-D with matching rows")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    if np.any(grid < 0):
        raise ValueError("lambda must be non-negative")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite inputs")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    keep = s > s[0] * 1e-12 if s.size and s[0] > 0 else s > 0
    u, s, vt = u[:, keep], s[keep], vt[keep]
    uty = u.T @ y
    out = np.empty((grid.size, x.shape[1], y.shape[1]))
    for i, lam in enumerate(grid):
        d = s / (s * s + lam) if lam > 0 else 1.0 / s
        out[i] = (vt.T * d) @ uty
    return out


def _cv_iteration(x, y, grid, plan, iteration):
    """Held-out correlations (n_grid, V) for one chunk draw."""
    t_train = x.shape[0]
    held = _held_mask(t_train, sample_chunks(t_train, plan, iteration))
    x_fit, y_fit = x[~held], y[~held]
    x_out, y_out = x[held], y[held]
    u, s, vt = np.linalg.svd(x_fit, full_matrices=False)
    keep = s > s[0] * 1e-12 if s.size and s[0] > 0 else s > 0
    u, s, vt = u[:, keep], s[keep], vt[keep]
    uty = u.T @ y_fit
    proj = x_out @ vt.T
    scores = np.empty((len(grid), y.shape[1]))
    for i, lam in enumerate(grid):
        d = s / (s * s + lam)
        y_hat = (proj * d) @ uty
        scores[i] = pearson_columns(y_out, y_hat)
    degenerate = np.any(~np.isfinite(scores), axis=0)
    scores[:, degenerate] = np.nan_to_num(scores[:, degenerate])
    return scores, degenerate


def fit_ridge_cv(x_train, y_train, grid=DEFAULT_GRID, plan: CvPlan = None,
                 n_threads=1):
    """Per-voxel ridge with chunked-CV lambda selection.

    For each iteration the model is fit on the retained rows at every
    lambda and scored by held-out correlation per voxel; scores are
    averaged over iterations and each voxel takes the argmax lambda (ties
    resolved toward the larger, more stable value).  Final weights are
    refit on all training rows at each voxel's chosen lambda.

    Voxels with a zero-variance held-out fold are flagged and pinned to
    the largest lambda on the grid.
    """
    plan = plan or CvPlan()
    x = np.asarray(x_train, float)
    y = np.asarray(y_train, float)
    if x.shape[0] != y.shape[0]:
        raise ValueError("X and Y row counts differ")
    plan.validate(x.shape[0])
    grid = np.asarray(grid, float)

    results = thread_map(
        lambda it: _cv_iteration(x, y, grid, plan, it),
        range(plan.n_iterations), n_threads=n_threads)
    curve = np.zeros((grid.size, y.shape[1]))
    flagged = np.zeros(y.shape[1], dtype=bool)
    for scores, degenerate in results:
        curve += scores
        flagged |= degenerate
    curve /= plan.n_iterations

    # argmax per voxel, ties toward larger lambda
    rev = curve[::-1]
    idx = grid.size - 1 - np.argmax(rev, axis=0)
    idx[flagged] = grid.size - 1
    best_cv = curve[idx, np.arange(y.shape[1])]

    weights = np.empty((x.shape[1], y.shape[1]))
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    keep = s > s[0] * 1e-12 if s.size and s[0] > 0 else s > 0
    u, s, vt = u[:, keep], s[keep], vt[keep]
    for i in np.unique(idx):
        cols = np.where(idx == i)[0]
        d = s / (s * s + grid[i])
        weights[:, cols] = (vt.T * d) @ (u.T @ y[:, cols])
    return RidgeFit(weights=weights, lambda_per_voxel=grid[idx],
                    cv_curve=curve, grid=grid, seed=plan.seed,
                    lambda_index=idx, flagged=flagged, best_cv=best_cv)


def predict(fit: RidgeFit, x_test):
    """Apply fitted weights to a (delayed) test design matrix."""
    x = np.asarray(x_test, float)
    if x.ndim != 2 or x.shape[1] != fit.weights.shape[0]:
        raise ValueError(
            f"X has {x.shape[1] if x.ndim == 2 else '?'} columns, fit expects "
            f"{fit.weights.shape[0]}")
    return x @ fit.weights


def banded_ridge_fit(x_train, y_train, cfg: BandedConfig, plan: CvPlan = None,
                     n_threads=1):
    """Two-band ridge with an exhaustive CV grid over (lambda1, lambda2).

    Uses the scaling reparameterization: solving ridge at lambda1 on
    [X1, X2 / sqrt(ratio)] with ratio = lambda2 / lambda1 and unscaling
    the second block afterwards is exactly the banded solution, so each
    distinct ratio needs only one SVD per fold and the lambda1 path comes
    for free.  Returned weights are in original (unscaled) feature units.
    """
    plan = plan or CvPlan()
    x = np.asarray(x_train, float)
    y = np.asarray(y_train, float)
    plan.validate(x.shape[0])
    (a0, a1), (b0, b1) = cfg.band_slices
    if b1 != x.shape[1]:
        raise ValueError("band slices do not cover all columns")
    g1 = np.asarray(cfg.grid1, float)
    g2 = np.asarray(cfg.grid2, float)
    n1, n2 = g1.size, g2.size
    v = y.shape[1]

    # group (i, j) pairs by ratio lambda2/lambda1
    ratio_groups = {}
    for i in range(n1):
        for j in range(n2):
            key = round(float(np.log10(g2[j]) - np.log10(g1[i])), 12)
            ratio_groups.setdefault(key, []).append((i, j))

    def make_scaled(ratio_log10):
        xs = x.copy()
        xs[:, b0:b1] /= np.sqrt(10.0 ** ratio_log10)
        return xs

    def run_iteration(iteration):
        held = _held_mask(x.shape[0], sample_chunks(x.shape[0], plan,
                                                    iteration))
        out = {}
        for key, pairs in ratio_groups.items():
            xs = make_scaled(key)
            x_fit, x_out = xs[~held], xs[held]
            u, s, vt = np.linalg.svd(x_fit, full_matrices=False)
            kp = s > s[0] * 1e-12 if s.size and s[0] > 0 else s > 0
            u, s, vt = u[:, kp], s[kp], vt[kp]
            uty = u.T @ y[~held]
            proj = x_out @ vt.T
            for (i, j) in pairs:
                lam = g1[i]
                d = s / (s * s + lam)
                y_hat = (proj * d) @ uty
                out[(i, j)] = pearson_columns(y[held], y_hat)
        return out

    results = thread_map(run_iteration, range(plan.n_iterations),
                         n_threads=n_threads)
    curve = np.zeros((n1, n2, v))
    flagged = np.zeros(v, dtype=bool)
    for res in results:
        for (i, j), score in res.items():
            bad = ~np.isfinite(score)
            flagged |= bad
            curve[i, j] += np.nan_to_num(score)
    curve /= plan.n_iterations

    # per-voxel argmax over pairs; ties resolved toward larger lambdas by
    # scanning pairs in ascending (lambda1, lambda2) order with >=
    best = np.full(v, -np.inf)
    bi = np.zeros(v, dtype=int)
    bj = np.zeros(v, dtype=int)
    for i in range(n1):
        for j in range(n2):
            upd = curve[i, j] >= best
            best[upd] = curve[i, j][upd]
            bi[upd] = i
            bj[upd] = j
    bi[flagged] = n1 - 1
    bj[flagged] = n2 - 1

    weights = np.empty((x.shape[1], v))
    scale2 = np.sqrt(g2[bj] / g1[bi])
    for key, pairs in ratio_groups.items():
        sel = np.zeros(v, dtype=bool)
        lam_for = np.zeros(v)
        for (i, j) in pairs:
            hit = (bi == i) & (bj == j)
            sel |= hit
            lam_for[hit] = g1[i]
        if not sel.any():
            continue
        xs = make_scaled(key)
        u, s, vt = np.linalg.svd(xs, full_matrices=False)
        kp = s > s[0] * 1e-12 if s.size and s[0] > 0 else s > 0
        u, s, vt = u[:, kp], s[kp], vt[kp]
        uty = u.T @ y[:, sel]
        for lam in np.unique(lam_for[sel]):
            cols = np.where(sel & (lam_for == lam))[0]
            pos = np.searchsorted(np.where(sel)[0], cols)
            d = s / (s * s + lam)
            weights[:, cols] = (vt.T * d) @ uty[:, pos]
    weights[b0:b1] /= scale2[None, :]

    flat = curve.reshape(n1 * n2, v)
    return RidgeFit(weights=weights, lambda_per_voxel=g1[bi],
                    cv_curve=flat, grid=g1, seed=plan.seed,
                    lambda_index=bi, flagged=flagged,
                    best_cv=curve[bi, bj, np.arange(v)],
                    lambda2_per_voxel=g2[bj], band_slices=cfg.band_slices)


# ---------------------------------------------------------------------------
# Serialization


def save_fit(fit: RidgeFit, directory):
    """Write a fit as MTX1 weight/CV matrices plus a JSON record."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(FeatureMatrix(fit.weights, rate_hz=1.0, label="weights"),
                 directory / "weights.mtx")
    write_matrix(FeatureMatrix(fit.cv_curve, rate_hz=1.0, label="cv_curve"),
                 directory / "cv_curve.mtx")
    doc = {
        "grid": [float(g) for g in fit.grid],
        "lambda_index": [int(i) for i in fit.lambda_index],
        "lambda_per_voxel": [float(v) for v in fit.lambda_per_voxel],
        "seed": int(fit.seed),
        "flagged": [int(i) for i in np.where(fit.flagged)[0]],
        "best_cv": [float(v) for v in fit.best_cv],
    }
    if fit.lambda2_per_voxel is not None:
        doc["lambda2_per_voxel"] = [float(v) for v in fit.lambda2_per_voxel]
        doc["band_slices"] = [list(map(int, s)) for s in fit.band_slices]
    (directory / "fit.json").write_text(json.dumps(doc))
    return directory


def load_fit(directory):
    directory = Path(directory)
    weights = read_matrix(directory / "weights.mtx").data
    curve = read_matrix(directory / "cv_curve.mtx").data
    doc = json.loads((directory / "fit.json").read_text())
    v = weights.shape[1]
    flagged = np.zeros(v, dtype=bool)
    flagged[doc.get("flagged", [])] = True
    return RidgeFit(
        weights=weights,
        lambda_per_voxel=np.asarray(doc["lambda_per_voxel"]),
        cv_curve=curve,
        grid=np.asarray(doc["grid"]),
        seed=doc["seed"],
        lambda_index=np.asarray(doc["lambda_index"], dtype=int),
        flagged=flagged,
        best_cv=np.asarray(doc["best_cv"]),
        lambda2_per_voxel=(np.asarray(doc["lambda2_per_voxel"])
                           if "lambda2_per_voxel" in doc else None),
        band_slices=(tuple(tuple(s) for s in doc["band_slices"])
                     if "band_slices" in doc else None),
    )
