"""Encoding evaluation and two-way variance partitioning.

Explained variance is approximated by the signed squared correlation
ssq(r) = sgn(r) * r^2, which keeps suppression (negative-correlation)
effects visible.  For two feature spaces with single-model performances
rho1, rho2 and a joint-model performance rho_joint, set arithmetic gives

    inter   = ssqrt(ssq(rho1) + ssq(rho2) - ssq(rho_joint))
    unique1 = ssqrt(ssq(rho1) - ssq(inter))
    unique2 = ssqrt(ssq(rho2) - ssq(inter))

all reported back in correlation units via the signed square root.
Negative intersections are carried with their sign rather than clipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ridge import (DEFAULT_GRID, BandedConfig, CvPlan, banded_ridge_fit,
                    fit_ridge_cv, predict)
from .util import pearson_columns

DOMINANT_LABELS = ("intersection", "unique1", "unique2")


@dataclass
class VoxelScores:
    """Per-voxel test-set correlations for one feature space."""

    rho: np.ndarray
    label: str = ""
    n_test_tr: int = 0
    flagged: np.ndarray = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        finite = self.rho[np.isfinite(self.rho)]
        if finite.size and (np.abs(finite) > 1.0 + 1e-9).any():
            raise ValueError("correlations must lie in [-1, 1]")
        if self.flagged is None:
            self.flagged = ~np.isfinite(self.rho)


@dataclass
class PartitionResult:
    """Unique/shared correlation components for a feature-space pair."""

    rho1: np.ndarray
    rho2: np.ndarray
    rho_joint: np.ndarray
    inter: np.ndarray
    unique1: np.ndarray
    unique2: np.ndarray
    dominant: np.ndarray  # int8 index into DOMINANT_LABELS
    mask: np.ndarray      # rho_joint > threshold
    threshold: float = 0.15


def evaluate(y_test, y_hat, label="") -> VoxelScores:
    """Per-voxel Pearson correlation between held-out truth and prediction.

    Zero-variance columns (on either side) come back NaN and flagged.
    """
    y_test = np.asarray(y_test, float)
    y_hat = np.asarray(y_hat, float)
    if y_test.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {y_test.shape} vs {y_hat.shape}")
    rho = pearson_columns(y_test, y_hat)
    return VoxelScores(rho=rho, label=label, n_test_tr=y_test.shape[0])


def signed_square(rho):
    """sgn(r) * r^2 — variance proxy that keeps the correlation's sign."""
    rho = np.asarray(rho, dtype=float)
    return np.sign(rho) * rho * rho


def signed_sqrt(x):
    """sgn(x) * sqrt(|x|); inverse of signed_square."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.sqrt(np.abs(x))


def partition_two(rho1, rho2, rho_joint, threshold=0.15) -> PartitionResult:
    """Split two models' performance into shared and unique components.

    Ties in the dominant-partition vote resolve to the intersection.
    """
    rho1 = np.asarray(rho1, float)
    rho2 = np.asarray(rho2, float)
    rho_joint = np.asarray(rho_joint, float)
    if not (rho1.shape == rho2.shape == rho_joint.shape):
        raise ValueError("score vectors must be aligned")
    ssq1 = signed_square(rho1)
    ssq2 = signed_square(rho2)
    ssqj = signed_square(rho_joint)
    inter = signed_sqrt(ssq1 + ssq2 - ssqj)
    # algebraically ssq_i - ssq(inter); this form avoids the sqrt round
    # trip so the exact cancellation cases come out exactly zero
    unique1 = signed_sqrt(ssqj - ssq2)
    unique2 = signed_sqrt(ssqj - ssq1)
    stacked = np.vstack([inter, unique1, unique2])
    dominant = np.argmax(stacked, axis=0).astype(np.int8)
    mask = rho_joint > threshold
    return PartitionResult(rho1=rho1, rho2=rho2, rho_joint=rho_joint,
                           inter=inter, unique1=unique1, unique2=unique2,
                           dominant=dominant, mask=mask, threshold=threshold)


def run_varpart(x1_train, x2_train, y_train, x1_test, x2_test, y_test,
                grid=None, plan: CvPlan = None, banded_grid_size=10,
                threshold=0.15, n_threads=1):
    """Fit both single-space models and the banded joint model, then split.

    Inputs are TR-rate, already-delayed design matrices with aligned rows.
    The joint model concatenates the two spaces as bands and searches a
    per-band lambda grid with the same chunk plan (seeds are shared across
    the three fits to cut variance).
    """
    grid = DEFAULT_GRID if grid is None else grid
    plan = plan or CvPlan()
    fit1 = fit_ridge_cv(x1_train, y_train, grid=grid, plan=plan,
                        n_threads=n_threads)
    fit2 = fit_ridge_cv(x2_train, y_train, grid=grid, plan=plan,
                        n_threads=n_threads)
    p1 = x1_train.shape[1]
    joint_train = np.hstack([x1_train, x2_train])
    bgrid = tuple(np.logspace(-2, 5, banded_grid_size))
    cfg = BandedConfig(band_slices=((0, p1), (p1, joint_train.shape[1])),
                       grid1=bgrid, grid2=bgrid)
    fit_joint = banded_ridge_fit(joint_train, y_train, cfg, plan=plan,
                                 n_threads=n_threads)
    rho1 = evaluate(y_test, predict(fit1, x1_test)).rho
    rho2 = evaluate(y_test, predict(fit2, x2_test)).rho
    rho_joint = evaluate(y_test, predict(fit_joint,
                                         np.hstack([x1_test, x2_test]))).rho
    return partition_two(rho1, rho2, rho_joint, threshold=threshold)


def partition_summary(result: PartitionResult):
    """Cortex-mean partition components (the bar-plot quantities)."""
    ok = np.isfinite(result.rho_joint)
    return {
        "mean_inter": float(np.nanmean(result.inter[ok])),
        "mean_unique1": float(np.nanmean(result.unique1[ok])),
        "mean_unique2": float(np.nanmean(result.unique2[ok])),
        "mean_rho1": float(np.nanmean(result.rho1[ok])),
        "mean_rho2": float(np.nanmean(result.rho2[ok])),
        "mean_rho_joint": float(np.nanmean(result.rho_joint[ok])),
        "n_masked": int(result.mask.sum()),
        "dominant_counts": {
            DOMINANT_LABELS[i]: int((result.dominant[result.mask] == i).sum())
            for i in range(3)
        },
        "threshold": result.threshold,
    }
