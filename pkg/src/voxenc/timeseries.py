"""Temporal preparation shared by stimulus features and responses.

Covers windowed-sinc downsampling to the scanner acquisition rate, FIR
delay expansion for the hemodynamic lag, slow-drift removal, edge
trimming, and per-column standardization.  All operations are pure and
column-wise, so results do not depend on how work is split across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import savgol_coeffs
from scipy.ndimage import correlate1d

from .dataio import FeatureMatrix, ResponseMatrix


@dataclass
class LanczosConfig:
    """Windowed-sinc downsampling parameters.

    The cutoff defaults to the target Nyquist so the output is free of
    aliased energy; `a` is the lobe count of the window (kernel support is
    a/cutoff seconds to each side).
    """

    target_rate_hz: float = 0.5
    a: int = 3
    cutoff_hz: float | None = None

    def __post_init__(self):
        if self.a < 1:
            raise ValueError("lobe count a must be >= 1")
        if self.cutoff_hz is None:
            self.cutoff_hz = self.target_rate_hz / 2.0


@dataclass
class DelayConfig:
    """FIR delays (in TRs) used to model the hemodynamic response."""

    delays_tr: tuple = (1, 2, 3, 4)

    def __post_init__(self):
        d = tuple(int(x) for x in self.delays_tr)
        if not d or min(d) < 1 or any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError("delays must be strictly increasing and >= 1")
        self.delays_tr = d


def lanczos_resample(x: FeatureMatrix, cfg: LanczosConfig | None = None):
    """Downsample a feature stream to the acquisition rate.

    Each output sample (placed at bin midpoints ``(k + 0.5)/target_rate``)
    is a windowed-sinc weighted sum of input samples, with the weights
    renormalized to sum to one so a constant input is reproduced exactly,
    including at the edges.

    Parameters
    ----------
    x : FeatureMatrix
        Input stream; ``x.rate_hz`` must exceed the target rate.
    cfg : LanczosConfig, optional

    Returns
    -------
    FeatureMatrix at ``cfg.target_rate_hz``.
    """
    cfg = cfg or LanczosConfig()
    if x.rate_hz <= cfg.target_rate_hz:
        raise ValueError(
            f"upsampling requested ({x.rate_hz} -> {cfg.target_rate_hz} Hz)")
    if cfg.cutoff_hz > x.rate_hz / 2.0:
        raise ValueError("cutoff above the source Nyquist frequency")
    data = np.asarray(x.data, dtype=float)
    t_len = data.shape[0]
    duration = t_len / x.rate_hz
    n_out = int(np.floor(duration * cfg.target_rate_hz))
    if n_out < 2:
        raise ValueError("output would have fewer than 2 samples")
    t_in0 = 0.0  # input sample i sits at i / rate_hz
    half = cfg.a / (2.0 * cfg.cutoff_hz)
    out = np.empty((n_out, data.shape[1]))
    for k in range(n_out):
        t = (k + 0.5) / cfg.target_rate_hz
        lo = max(int(np.ceil((t - half - t_in0) * x.rate_hz)), 0)
        hi = min(int(np.floor((t + half - t_in0) * x.rate_hz)), t_len - 1)
        if hi < lo:
            raise ValueError(f"empty kernel window at output sample {k}")
        u = 2.0 * cfg.cutoff_hz * (t - np.arange(lo, hi + 1) / x.rate_hz)
        w = np.sinc(u) * np.sinc(u / cfg.a)
        w[np.abs(u) >= cfg.a] = 0.0
        w /= w.sum()
        out[k] = w @ data[lo:hi + 1]
    return FeatureMatrix(out, rate_hz=cfg.target_rate_hz, label=x.label,
                         causal=x.causal)


def fir_delays(x, cfg: DelayConfig | None = None):
    """Expand a TR-rate matrix with time-shifted copies of itself.

    Block ``d`` (for delay ``k`` TRs) at row ``t`` equals the input row
    ``t - k``; rows before the sequence start are zero.  Blocks follow the
    order of ``cfg.delays_tr``, so the output has ``P * len(delays)``
    columns.
    """
    cfg = cfg or DelayConfig()
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a 2-D (T x P) matrix")
    t_len, p = x.shape
    if t_len <= max(cfg.delays_tr):
        raise ValueError(
            f"T={t_len} must exceed the largest delay {max(cfg.delays_tr)}")
    out = np.zeros((t_len, p * len(cfg.delays_tr)), dtype=x.dtype)
    for j, k in enumerate(cfg.delays_tr):
        out[k:, j * p:(j + 1) * p] = x[:-k]
    return out


def _savgol_smooth(data, window, order):
    """Sliding least-squares polynomial fit; truncated windows at edges."""
    t_len = data.shape[0]
    half = window // 2
    kern = savgol_coeffs(window, order)
    smooth = correlate1d(data, kern, axis=0, mode="nearest")
    for t in list(range(min(half, t_len))) + list(range(max(t_len - half, 0),
                                                        t_len)):
        lo, hi = max(0, t - half), min(t_len, t + half + 1)
        rel = np.arange(lo, hi) - t
        vander = np.vander(rel, order + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(vander, data[lo:hi], rcond=None)
        smooth[t] = coef[0]
    return smooth


def savgol_detrend(r: ResponseMatrix, window_s=120.0, order=2):
    """Remove slow voxel drift with a sliding polynomial fit.

    The window is the nearest odd TR count to ``window_s``; the fitted
    local polynomial is subtracted per column.  Edge samples use windows
    truncated to the available data.
    """
    window = int(round(window_s / r.tr_seconds))
    if window % 2 == 0:
        window += 1
    window = max(window, order + 2 if (order + 2) % 2 else order + 3)
    t_len = r.data.shape[0]
    if window > t_len:
        raise ValueError(
            f"detrend window ({window} TRs) exceeds series length {t_len}")
    data = np.asarray(r.data, dtype=float)
    resid = data - _savgol_smooth(data, window, order)
    return ResponseMatrix(resid, tr_seconds=r.tr_seconds, preprocessed=False)


def trim_edges(m, n_tr=10):
    """Drop the first and last ``n_tr`` rows.

    Paired feature/response streams must be trimmed identically.  Not
    idempotent: calling twice removes twice as much.  A trimmed response
    loses its ``preprocessed`` guarantee (means/variances shift), so the
    flag is cleared.
    """
    data = m.data if isinstance(m, (FeatureMatrix, ResponseMatrix)) else m
    data = np.asarray(data)
    if data.shape[0] <= 2 * n_tr:
        raise ValueError(
            f"cannot trim {n_tr} rows from both ends of length {data.shape[0]}")
    trimmed = data[n_tr:data.shape[0] - n_tr]
    if isinstance(m, FeatureMatrix):
        return replace(m, data=trimmed)
    if isinstance(m, ResponseMatrix):
        return ResponseMatrix(trimmed, tr_seconds=m.tr_seconds,
                              preprocessed=False)
    return trimmed


def zscore_columns(m, tolerate_constant=False):
    """Standardize each column to zero mean, unit population variance.

    Constant columns raise (naming the first offending index) unless
    ``tolerate_constant`` is set, in which case they are left at zero.
    """
    data = m.data if isinstance(m, (FeatureMatrix, ResponseMatrix)) else m
    data = np.asarray(data, dtype=float)
    mu = data.mean(axis=0)
    sd = data.std(axis=0)  # population (1/N) convention
    bad = np.where(sd == 0)[0]
    if bad.size and not tolerate_constant:
        raise ValueError(f"column {int(bad[0])} is constant; cannot z-score")
    safe = np.where(sd == 0, 1.0, sd)
    z = (data - mu) / safe
    if bad.size:
        z[:, bad] = 0.0
    if isinstance(m, FeatureMatrix):
        return replace(m, data=z)
    if isinstance(m, ResponseMatrix):
        preprocessed = not bad.size
        return ResponseMatrix(z, tr_seconds=m.tr_seconds,
                              preprocessed=preprocessed)
    return z


def preprocess_response(r: ResponseMatrix, window_s=120.0, order=2, n_tr=10):
    """Standard response cleanup: detrend, trim both ends, z-score."""
    out = savgol_detrend(r, window_s=window_s, order=order)
    out = trim_edges(out, n_tr=n_tr)
    return zscore_columns(out)
