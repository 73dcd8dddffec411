"""Small shared numerical helpers."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def rng_from(seed, *tags):
    """Deterministic generator keyed by a seed plus integer context tags."""
    return np.random.default_rng([int(seed)] + [int(t) for t in tags])


def pearson_columns(a, b):
    """Column-wise Pearson correlation between two (N, V) arrays.

    Columns with zero variance on either side get NaN instead of raising.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < 3:
        raise ValueError("need at least 3 samples for a correlation")
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    na = np.sqrt((ac * ac).sum(axis=0))
    nb = np.sqrt((bc * bc).sum(axis=0))
    denom = na * nb
    # exactly-constant columns can still center to ~1e-16 residue
    constant = (a == a[0]).all(axis=0) | (b == b[0]).all(axis=0)
    ok = (denom > 0) & ~constant
    r = np.full(a.shape[1], np.nan)
    r[ok] = (ac[:, ok] * bc[:, ok]).sum(axis=0) / denom[ok]
    return r


def pearson(x, y):
    """Scalar Pearson correlation between two 1-D vectors."""
    r = pearson_columns(np.asarray(x, float).reshape(-1, 1),
                        np.asarray(y, float).reshape(-1, 1))
    return float(r[0])


def pearson_rows(a, b):
    """Row-wise Pearson correlation between two (N, P) arrays (per sample)."""
    return pearson_columns(np.asarray(a, float).T, np.asarray(b, float).T)


def thread_map(fn, items, n_threads=1):
    """Order-preserving map, optionally over a thread pool.

    Results are gathered in input order, so any later reduction is
    independent of the worker count.
    """
    items = list(items)
    if n_threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(fn, items))
