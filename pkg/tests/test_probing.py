import numpy as np
import pytest

from voxenc.dataio import AlignmentTable, FeatureMatrix
from voxenc.probing import (bottleneck_probe, classifier_probe,
                            most_frequent_baseline, normalize_curves,
                            perplexity, pool_spans, regression_probe,
                            split_stories)


def _spans(starts, ends, labels, kind="phoneme"):
    return AlignmentTable(np.array(starts, float), np.array(ends, float),
                          labels, kind=kind)


def _features(data, rate=100.0):
    return FeatureMatrix(np.asarray(data, float), rate_hz=rate)


# ---------------------------------------------------------------------------
# pool_spans


def test_pool_constant_features(rng):
    feats = _features(np.full((100, 4), 2.5))
    pooled, flags = pool_spans(feats, _spans([0.1, 0.5], [0.3, 0.9],
                                             ["A", "B"]))
    assert np.all(pooled == 2.5)
    assert not flags.any()


def test_pool_exact_frame_window(rng):
    data = rng.standard_normal((50, 3))
    feats = _features(data)
    # centers 0.105..0.195 -> frames 10..19
    pooled, _ = pool_spans(feats, _spans([0.10], [0.20], ["A"]))
    assert np.allclose(pooled[0], data[10:20].mean(axis=0), atol=1e-12)


def test_pool_single_frame_span(rng):
    data = rng.standard_normal((50, 2))
    feats = _features(data)
    # one frame center (0.125) inside the span
    pooled, flags = pool_spans(feats, _spans([0.122], [0.128], ["A"]))
    assert not flags[0]
    assert np.array_equal(pooled[0], data[12])


def test_pool_empty_span_takes_nearest_and_flags(rng):
    data = rng.standard_normal((50, 2))
    feats = _features(data)
    # no frame center in [0.126, 0.129); nearest frame to the midpoint
    pooled, flags = pool_spans(feats, _spans([0.126], [0.129], ["A"]))
    assert flags[0]
    assert np.array_equal(pooled[0], data[12])


def test_pool_beyond_duration(rng):
    feats = _features(rng.standard_normal((50, 2)))
    with pytest.raises(ValueError, match="beyond"):
        pool_spans(feats, _spans([0.4], [0.8], ["A"]))


def test_pool_frame_order_invariant(rng):
    data = rng.standard_normal((40, 3))
    span = _spans([0.05], [0.35], ["A"])
    pooled, _ = pool_spans(_features(data), span)
    shuffled = data.copy()
    shuffled[5:35] = shuffled[5:35][::-1]
    pooled2, _ = pool_spans(_features(shuffled), span)
    assert np.allclose(pooled, pooled2, atol=1e-12)


# ---------------------------------------------------------------------------
# split_stories


def test_split_deterministic():
    ids = [f"s{i}" for i in range(27)]
    assert split_stories(ids, seed=4) == split_stories(ids, seed=4)


def test_split_sizes():
    for n, sizes in [(27, (22, 3, 2)), (10, (8, 1, 1)), (5, (3, 1, 1))]:
        s = split_stories([f"s{i}" for i in range(n)], seed=0)
        assert (len(s["train"]), len(s["val"]), len(s["test"])) == sizes
        assert sorted(s["train"] + s["val"] + s["test"]) == sorted(
            f"s{i}" for i in range(n))


def test_split_varies_across_seeds():
    ids = [f"s{i}" for i in range(27)]
    parts = {tuple(split_stories(ids, seed=s)["test"]) for s in range(3)}
    assert len(parts) > 1


def test_split_too_few():
    with pytest.raises(ValueError, match="5"):
        split_stories(["a", "b"], seed=0)


# ---------------------------------------------------------------------------
# regression probe


def _xyz(rng, n=600, p=20, d=6, noise=0.0, w=None):
    x = rng.standard_normal((n, p))
    if w is None:
        w = rng.standard_normal((p, d))
    y = x @ w + noise * rng.standard_normal((n, d))
    return (x[:400], y[:400], x[400:500], y[400:500], x[500:], y[500:])


def test_regression_noiseless(rng):
    res = regression_probe(*_xyz(rng))
    assert res["metric"] > 0.999


def test_regression_null(rng):
    x = rng.standard_normal((600, 20))
    y = rng.standard_normal((600, 6))
    res = regression_probe(x[:400], y[:400], x[400:500], y[400:500],
                           x[500:], y[500:])
    assert abs(res["metric"]) < 0.05


def test_regression_duplicated_column(rng):
    x = rng.standard_normal((600, 10))
    y = np.tile(x[:, [0]], (1, 5))
    res = regression_probe(x[:400], y[:400], x[400:500], y[400:500],
                           x[500:], y[500:])
    assert res["metric"] > 0.999


def test_regression_degenerate_dim_excluded(rng):
    x = rng.standard_normal((600, 10))
    y = x @ rng.standard_normal((10, 3))
    y[:, 1] = 4.2
    res = regression_probe(x[:400], y[:400], x[400:500], y[400:500],
                           x[500:], y[500:])
    assert res["excluded_dims"] == 1
    assert res["metric"] > 0.999


# ---------------------------------------------------------------------------
# classifier probe


def _blobs(rng, n, centers, spread=0.1):
    y = rng.integers(0, len(centers), n)
    x = centers[y] + spread * rng.standard_normal((n, centers.shape[1]))
    return x, [f"c{int(i)}" for i in y]


def test_uniform_predictor_perplexity_is_class_count(rng):
    for k in (2, 5, 11):
        probs = np.full((40, k), 1.0 / k)
        labels = rng.integers(0, k, 40)
        assert perplexity(probs, labels) == pytest.approx(k, rel=1e-12)


def test_separable_blobs_high_accuracy(rng):
    centers = 4.0 * rng.standard_normal((3, 6))
    res = classifier_probe(*_blobs(rng, 400, centers),
                           *_blobs(rng, 100, centers),
                           *_blobs(rng, 250, centers))
    assert res["accuracy"] > 0.99
    assert res["perplexity"] < 1.5


def test_most_frequent_baseline_matches_top_class(rng):
    y_train = ["a"] * 6 + ["b"] * 3 + ["c"]
    y_test = ["a"] * 4 + ["b"] * 4 + ["c"] * 2
    base = most_frequent_baseline(y_train, y_test)
    assert base["accuracy"] == 0.4  # frequency of "a" in the test labels
    assert base["perplexity"] >= 1.0


def test_single_class_train_rejected(rng):
    x = rng.standard_normal((20, 3))
    with pytest.raises(ValueError, match="single class"):
        classifier_probe(x[:10], ["a"] * 10, x[10:15], ["a"] * 5,
                         x[15:], ["a", "b", "a", "b", "a"])


def test_unseen_class_scored_via_smoothing(rng):
    centers = 4.0 * rng.standard_normal((2, 4))
    x_tr, y_tr = _blobs(rng, 200, centers)
    x_v, y_v = _blobs(rng, 50, centers)
    x_te, y_te = _blobs(rng, 50, centers)
    y_te[0] = "zz"  # never seen in training
    res = classifier_probe(x_tr, y_tr, x_v, y_v, x_te, y_te)
    assert np.isfinite(res["perplexity"])
    assert "zz" in res["classes"]


# ---------------------------------------------------------------------------
# bottleneck probe


def test_bottleneck_rank_limited_recovery(rng):
    p, d, n = 64, 100, 600
    x = rng.standard_normal((n, p))
    w = rng.standard_normal((p, 50)) @ rng.standard_normal((50, d))
    y = x @ w / np.sqrt(p * 50)
    res = bottleneck_probe(x[:400], y[:400], x[400:500], y[400:500],
                           x[500:], y[500:], seed=0)
    assert res["metric"] > 0.99


def test_bottleneck_random_vector_baseline(rng):
    p, d, n = 32, 24, 600
    x = rng.standard_normal((n, p))
    y = rng.standard_normal((n, d))  # embeddings drawn from a normal
    res = bottleneck_probe(x[:400], y[:400], x[400:500], y[400:500],
                           x[500:], y[500:], seed=0)
    assert abs(res["metric"]) < 0.05


def test_bottleneck_shuffle_baseline_below_true(rng):
    # word-predictive features; shuffling the embedding table between
    # words must hurt
    vocab = 12
    emb = rng.standard_normal((vocab, 16))
    words = rng.integers(0, vocab, 700)
    signatures = rng.standard_normal((vocab, 24))
    x = signatures[words] + 0.05 * rng.standard_normal((700, 24))
    y_true = emb[words]
    perm = rng.permutation(vocab)
    y_shuf = emb[perm][words]

    def run(y):
        return bottleneck_probe(x[:500], y[:500], x[500:600], y[500:600],
                                x[600:], y[600:], seed=1)["metric"]

    assert run(y_true) > run(y_shuf)
    assert run(y_true) > 0.9


def test_bottleneck_deterministic(rng):
    x = rng.standard_normal((300, 10))
    y = rng.standard_normal((300, 8))
    a = bottleneck_probe(x[:200], y[:200], x[200:250], y[200:250],
                         x[250:], y[250:], seed=3)
    b = bottleneck_probe(x[:200], y[:200], x[200:250], y[200:250],
                         x[250:], y[250:], seed=3)
    assert a["metric"] == b["metric"]


# ---------------------------------------------------------------------------
# curve normalization


def test_normalize_basic():
    out, flat = normalize_curves([0.2, 0.5, 0.8])
    assert np.allclose(out, [0.0, 0.5, 1.0])
    assert not flat


def test_normalize_perplexity_negated():
    out, _ = normalize_curves([100.0, 10.0], metric="perplexity")
    assert np.allclose(out, [0.0, 1.0])


def test_normalize_constant_flagged():
    out, flat = normalize_curves([0.3, 0.3])
    assert np.all(out == 1.0)
    assert flat


def test_normalize_needs_two_layers():
    with pytest.raises(ValueError, match="2"):
        normalize_curves([0.5])
