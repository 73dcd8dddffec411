"""Probes that read linguistic structure out of frozen feature spaces.

Continuous targets use ridge probes scored by mean test correlation;
categorical targets use a multinomial logistic classifier scored by
accuracy and perplexity; embedding targets use a linear bottleneck MLP.
Splits are story-level so probe train/test frames never share a story.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dataio import AlignmentTable, FeatureMatrix
from .ridge import svd_ridge_path
from .util import pearson_columns, pearson_rows, rng_from

PROBE_GRID = tuple(np.logspace(-2, 4, 7))


@dataclass
class ProbeTask:
    kind: str                   # regression | classification | bottleneck
    target: str                 # e.g. fbank | spectrotemporal | phoneme | word
    pooling: str = "span-mean"
    split_seed: int = 0
    ratios: tuple = (0.8, 0.1, 0.1)


@dataclass
class ProbeResult:
    """Rows of per-(layer, task, seed) metrics plus task baselines."""

    rows: list = field(default_factory=list)

    def add(self, layer, task, seed, metric, value, baseline=None):
        self.rows.append({"layer": layer, "task": task, "seed": int(seed),
                          "metric": metric, "value": float(value),
                          "baseline": (None if baseline is None
                                       else float(baseline))})

    def values(self, task, layers, metric=None, reduce="mean"):
        out = []
        for layer in layers:
            vals = [r["value"] for r in self.rows
                    if r["layer"] == layer and r["task"] == task
                    and (metric is None or r["metric"] == metric)]
            if not vals:
                raise KeyError(f"no rows for layer={layer} task={task}")
            out.append(float(np.mean(vals)) if reduce == "mean" else vals)
        return np.asarray(out) if reduce == "mean" else out


# ---------------------------------------------------------------------------
# Pooling and splits


def pool_spans(features: FeatureMatrix, spans: AlignmentTable):
    """Mean-pool frames within each labeled span.

    Row i averages the frames whose centers fall inside span i.  A span
    narrower than one frame gets the single nearest frame and is flagged.
    Returns ``(pooled (n_spans, P), empty_flags)``.
    """
    data = np.asarray(features.data, float)
    rate = features.rate_hz
    duration = data.shape[0] / rate
    centers = (np.arange(data.shape[0]) + 0.5) / rate
    pooled = np.empty((len(spans), data.shape[1]))
    flags = np.zeros(len(spans), dtype=bool)
    for i, (s, e) in enumerate(zip(spans.start_s, spans.end_s)):
        if e > duration + 0.5 / rate:
            raise ValueError(
                f"span {i} ([{s:.3f}, {e:.3f}] s) extends beyond the "
                f"{duration:.3f} s feature stream")
        lo = np.searchsorted(centers, s, side="left")
        hi = np.searchsorted(centers, e, side="left")
        if hi > lo:
            pooled[i] = data[lo:hi].mean(axis=0)
        else:
            nearest = int(np.clip(round((s + e) / 2 * rate - 0.5), 0,
                                  data.shape[0] - 1))
            pooled[i] = data[nearest]
            flags[i] = True
    return pooled, flags


def split_stories(story_ids, seed, ratios=(0.8, 0.1, 0.1)):
    """Deterministic story-level train/val/test split.

    Sizes are ceil(r_train * n) / ceil(r_val * n) with the remainder as
    test; if that leaves the test set empty, stories are moved from train.
    """
    ids = list(story_ids)
    n = len(ids)
    if n < 5:
        raise ValueError("need at least 5 stories to split")
    n_train = math.ceil(ratios[0] * n)
    n_val = math.ceil(ratios[1] * n)
    n_test = n - n_train - n_val
    if n_test < 1:
        n_train -= 1 - n_test
        n_test = 1
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"ratios {ratios} leave an empty part for n={n}")
    order = rng_from(seed, 101).permutation(n)
    shuffled = [ids[i] for i in order]
    return {
        "train": shuffled[:n_train],
        "val": shuffled[n_train:n_train + n_val],
        "test": shuffled[n_train + n_val:],
    }


# ---------------------------------------------------------------------------
# Regression probe


def regression_probe(x_train, y_train, x_val, y_val, x_test, y_test,
                     grid=PROBE_GRID):
    """Ridge map from features to a continuous target space.

    Lambda is chosen by mean validation correlation; the metric is the
    mean over target dimensions of the test-set correlation.  Target
    dimensions with zero test variance are excluded and reported.
    """
    grid = np.asarray(grid, float)
    paths = svd_ridge_path(x_train, y_train, grid)
    val_scores = np.empty(grid.size)
    for i in range(grid.size):
        r = pearson_columns(y_val, x_val @ paths[i])
        val_scores[i] = np.nanmean(r)
    best = int(np.nanargmax(val_scores))
    r_test = pearson_columns(y_test, x_test @ paths[best])
    excluded = ~np.isfinite(r_test)
    metric = float(np.nanmean(r_test)) if (~excluded).any() else float("nan")
    return {"metric": metric, "lambda": float(grid[best]),
            "per_dim": r_test, "excluded_dims": int(excluded.sum()),
            "val_curve": val_scores}


# ---------------------------------------------------------------------------
# Classifier probe


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _fit_multinomial(x, y_idx, n_classes, alpha, max_iter=200):
    """L2-penalized multinomial logistic regression (L-BFGS)."""
    n, p = x.shape
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y_idx] = 1.0

    def loss_grad(theta):
        w = theta[:p * n_classes].reshape(p, n_classes)
        b = theta[p * n_classes:]
        probs = _softmax(x @ w + b)
        nll = -np.log(probs[np.arange(n), y_idx] + 1e-300).mean()
        nll += 0.5 * alpha * (w * w).sum()
        diff = (probs - onehot) / n
        gw = x.T @ diff + alpha * w
        gb = diff.sum(axis=0)
        return nll, np.concatenate([gw.ravel(), gb])

    theta0 = np.zeros(p * n_classes + n_classes)
    res = minimize(loss_grad, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter})
    w = res.x[:p * n_classes].reshape(p, n_classes)
    b = res.x[p * n_classes:]
    return w, b


def perplexity(probs, y_idx):
    """exp of the mean negative natural-log likelihood."""
    probs = np.asarray(probs, float)
    picked = probs[np.arange(len(y_idx)), np.asarray(y_idx, int)]
    return float(np.exp(-np.log(picked).mean()))


def classifier_probe(x_train, y_train, x_val, y_val, x_test, y_test,
                     classes=None, alphas=(1e-4, 1e-2, 1.0),
                     smoothing=1e-6):
    """Multinomial logistic probe scored by accuracy and perplexity.

    The L2 penalty is chosen on validation accuracy.  Test probabilities
    are computed over the global class list; classes absent from the
    training set receive mass only through label smoothing, so the
    perplexity stays finite.
    """
    if classes is None:
        classes = sorted(set(y_train) | set(y_val) | set(y_test))
    cls_index = {c: i for i, c in enumerate(classes)}
    train_classes = sorted(set(y_train), key=lambda c: cls_index[c])
    if len(train_classes) < 2:
        raise ValueError("training set contains a single class")
    tr_index = {c: i for i, c in enumerate(train_classes)}

    ytr = np.array([tr_index[c] for c in y_train])
    best = None
    for alpha in alphas:
        w, b = _fit_multinomial(x_train, ytr, len(train_classes), alpha)
        val_pred = np.argmax(x_val @ w + b, axis=1)
        val_acc = float(np.mean([train_classes[i] == c
                                 for i, c in zip(val_pred, y_val)]))
        if best is None or val_acc > best[0]:
            best = (val_acc, alpha, w, b)
    _, alpha, w, b = best

    probs_train_cls = _softmax(x_test @ w + b)
    probs = np.zeros((len(y_test), len(classes)))
    for c, j in tr_index.items():
        probs[:, cls_index[c]] = probs_train_cls[:, j]
    probs = (probs + smoothing) / (1.0 + smoothing * len(classes))

    pred = [train_classes[i] for i in np.argmax(probs_train_cls, axis=1)]
    accuracy = float(np.mean([p == c for p, c in zip(pred, y_test)]))
    y_test_idx = [cls_index[c] for c in y_test]
    return {"accuracy": accuracy, "perplexity": perplexity(probs, y_test_idx),
            "alpha": float(alpha), "classes": classes}


def most_frequent_baseline(y_train, y_test, classes=None, smoothing=1e-6):
    """Predicts the most frequent training class everywhere.

    Accuracy is that class's test frequency; perplexity is scored with
    the empirical training distribution (smoothed over the class list).
    """
    if classes is None:
        classes = sorted(set(y_train) | set(y_test))
    counts = {c: 0 for c in classes}
    for c in y_train:
        counts[c] += 1
    mode = max(classes, key=lambda c: counts[c])
    accuracy = float(np.mean([c == mode for c in y_test]))
    dist = np.array([counts[c] for c in classes], float)
    dist = (dist / dist.sum() + smoothing) / (1.0 + smoothing * len(classes))
    probs = np.tile(dist, (len(y_test), 1))
    idx = [classes.index(c) for c in y_test]
    return {"accuracy": accuracy, "perplexity": perplexity(probs, idx)}


# ---------------------------------------------------------------------------
# Bottleneck embedding probe


def bottleneck_probe(x_train, y_train, x_val, y_val, x_test, y_test,
                     bottleneck=50, alpha=1e-4, lr=0.01, max_iter=2000,
                     eval_every=10, patience=10, seed=0):
    """Linear MLP with one bottleneck layer, trained on MSE.

    The output layer carries the L2 penalty.  Training is full-batch Adam
    with early stopping on validation MSE (``patience`` evaluations).  The
    metric is the mean over test rows of the correlation between the
    predicted and true embedding vectors.
    """
    x_train = np.asarray(x_train, float)
    y_train = np.asarray(y_train, float)
    p, d = x_train.shape[1], y_train.shape[1]
    k = min(bottleneck, p, d)
    rng = rng_from(seed, 202)
    w1 = rng.standard_normal((p, k)) / np.sqrt(p)
    w2 = rng.standard_normal((k, d)) / np.sqrt(k)
    b = np.zeros(d)
    params = [w1, w2, b]
    moments = [(np.zeros_like(q), np.zeros_like(q)) for q in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    def forward(x, w1, w2, b):
        return (x @ w1) @ w2 + b

    def val_mse(w1, w2, b):
        err = forward(x_val, w1, w2, b) - y_val
        return float((err * err).mean())

    best = (val_mse(w1, w2, b), [q.copy() for q in params])
    stall = 0
    n = x_train.shape[0]
    step = 0
    diverged = False
    for it in range(1, max_iter + 1):
        z = x_train @ w1
        out = z @ w2 + b
        err = out - y_train
        loss = (err * err).mean()
        if not np.isfinite(loss):
            diverged = True
            break
        g_out = 2.0 * err / (n * d)
        g_w2 = z.T @ g_out + alpha * w2
        g_b = g_out.sum(axis=0)
        g_w1 = x_train.T @ (g_out @ w2.T)
        step += 1
        for q, g, mom in zip(params, [g_w1, g_w2, g_b], moments):
            m, v2 = mom
            m *= beta1
            m += (1 - beta1) * g
            v2 *= beta2
            v2 += (1 - beta2) * g * g
            mh = m / (1 - beta1 ** step)
            vh = v2 / (1 - beta2 ** step)
            q -= lr * mh / (np.sqrt(vh) + eps)
        if it % eval_every == 0:
            mse = val_mse(w1, w2, b)
            if mse < best[0] - 1e-12:
                best = (mse, [q.copy() for q in params])
                stall = 0
            else:
                stall += 1
                if stall >= patience:
                    break
    if diverged:
        raise RuntimeError(f"bottleneck probe diverged (loss={loss!r})")
    w1, w2, b = best[1]
    pred = forward(np.asarray(x_test, float), w1, w2, b)
    r = pearson_rows(pred, np.asarray(y_test, float))
    return {"metric": float(np.nanmean(r)), "per_row": r,
            "val_mse": best[0], "iterations": it}


# ---------------------------------------------------------------------------
# Curve normalization


def normalize_curves(values, metric="mean-corr"):
    """Min-max normalize a per-layer metric curve to [0, 1].

    Perplexity is negated first so 1 is always best.  A constant curve
    maps to all ones and is flagged.  Returns ``(curve, constant_flag)``.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size < 2:
        raise ValueError("need at least 2 layers to normalize")
    oriented = -vals if metric == "perplexity" else vals
    lo, hi = oriented.min(), oriented.max()
    if hi - lo == 0:
        return np.ones_like(oriented), True
    return (oriented - lo) / (hi - lo), False
