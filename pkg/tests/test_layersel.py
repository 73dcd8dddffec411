import numpy as np
import pytest

from voxenc.layersel import (PerfMatrix, build_perf_matrix, correlate_maps,
                             double_center, pca_svd)
from voxenc.varpart import VoxelScores


def _scores(rho):
    return VoxelScores(np.asarray(rho, float))


# ---------------------------------------------------------------------------
# build_perf_matrix


def test_thirteen_layers_give_thirteen_columns(rng):
    layers = [_scores(rng.uniform(0.2, 0.8, 40)) for _ in range(13)]
    perf = build_perf_matrix(layers)
    assert perf.c.shape == (40, 13)


def test_threshold_filters_voxels(rng):
    good = rng.uniform(0.3, 0.6, 10)
    bad = rng.uniform(-0.1, 0.1, 10)
    layers = [_scores(np.concatenate([good, bad])) for _ in range(4)]
    perf = build_perf_matrix(layers, threshold=0.15)
    assert perf.c.shape[0] == 10
    assert np.array_equal(perf.voxel_index_map, np.arange(10))


def test_all_below_threshold_rejected(rng):
    layers = [_scores(rng.uniform(-0.1, 0.1, 20)) for _ in range(3)]
    with pytest.raises(ValueError, match="exceed"):
        build_perf_matrix(layers, threshold=0.15)


def test_negative_threshold_keeps_everything(rng):
    layers = [_scores(rng.uniform(-0.5, 0.5, 25)) for _ in range(3)]
    perf = build_perf_matrix(layers, threshold=-1.0)
    assert perf.c.shape[0] == 25


def test_nan_voxels_dropped(rng):
    rho = rng.uniform(0.3, 0.6, 10)
    rho[3] = np.nan
    layers = [_scores(rho) for _ in range(3)]
    perf = build_perf_matrix(layers, threshold=0.15)
    assert 3 not in perf.voxel_index_map


# ---------------------------------------------------------------------------
# double centering


def test_constant_matrix_centers_to_zero():
    out = double_center(np.full((6, 4), 3.7))
    assert np.abs(out).max() < 1e-12


def test_additive_model_removed(rng):
    a = rng.standard_normal((30, 1))
    b = rng.standard_normal((1, 7))
    out = double_center(a @ np.ones((1, 7)) + np.ones((30, 1)) @ b)
    assert np.abs(out).max() < 1e-10


def test_double_center_random_means_and_idempotence(rng):
    c = rng.standard_normal((50, 13))
    out = double_center(c)
    assert np.abs(out.mean(axis=0)).max() < 1e-12
    assert np.abs(out.mean(axis=1)).max() < 1e-12
    assert np.abs(double_center(out) - out).max() < 1e-12


# ---------------------------------------------------------------------------
# PCA


def test_rank_one_varexp():
    u = np.linspace(-1, 1, 20)[:, None]
    v = np.arange(1.0, 6.0)[None, :]
    c = double_center(u @ v)
    pca = pca_svd(c, k=4)
    assert pca.varexp[0] > 1 - 1e-10
    assert np.abs(pca.varexp[1:]).max() < 1e-10


def test_two_pattern_recovery(rng):
    # orthogonal voxel patterns with orthogonal layer signatures
    pat1 = np.concatenate([np.ones(25), -np.ones(25)])
    pat2 = np.concatenate([np.ones(13), -np.ones(24), np.ones(13)])
    pat2 = pat2 - pat2 @ pat1 / (pat1 @ pat1) * pat1
    sig1 = np.sin(np.linspace(0, np.pi, 8))
    sig1 -= sig1.mean()
    sig2 = np.cos(np.linspace(0, 3 * np.pi, 8))
    sig2 -= sig2.mean()
    c = 3.0 * np.outer(pat1, sig1) + 1.0 * np.outer(pat2, sig2)
    pca = pca_svd(double_center(c), k=2)
    r1 = np.corrcoef(pca.scores[:, 0], pat1)[0, 1]
    r2 = np.corrcoef(pca.scores[:, 1], pat2)[0, 1]
    assert abs(r1) > 0.999 and abs(r2) > 0.999


def test_varexp_matches_eigendecomposition(rng):
    c = double_center(rng.standard_normal((200, 13)))
    pca = pca_svd(c, k=13)
    eigvals = np.sort(np.linalg.eigvalsh(c.T @ c))[::-1]
    oracle = eigvals / eigvals.sum()
    assert np.abs(pca.varexp - oracle).max() < 1e-8
    assert abs(pca.varexp.sum() - 1.0) < 1e-10


def test_projection_reconstructs(rng):
    c = double_center(rng.standard_normal((40, 9)))
    pca = pca_svd(c, k=9)
    recon = pca.scores @ pca.loadings.T
    assert np.abs(recon - c).max() < 1e-8


def test_loadings_orthonormal_and_sign_fixed(rng):
    c = double_center(rng.standard_normal((60, 7)))
    pca = pca_svd(c, k=5)
    gram = pca.loadings.T @ pca.loadings
    assert np.abs(gram - np.eye(5)).max() < 1e-8
    for j in range(5):
        pivot = np.argmax(np.abs(pca.loadings[:, j]))
        assert pca.loadings[pivot, j] > 0
    again = pca_svd(c, k=5)
    assert np.array_equal(pca.loadings, again.loadings)
    assert np.array_equal(pca.scores, again.scores)


def test_k_too_large_rejected(rng):
    with pytest.raises(ValueError, match="exceeds"):
        pca_svd(double_center(rng.standard_normal((5, 4))), k=5)


# ---------------------------------------------------------------------------
# correlate_maps


def test_correlate_self_and_negation(rng):
    scores = rng.uniform(-1, 1, 30)
    idx = np.arange(30)
    assert correlate_maps(scores, idx, _scores(scores)) == pytest.approx(1.0)
    assert correlate_maps(scores, idx, _scores(-scores)) == pytest.approx(-1.0)


def test_correlate_with_roi_restriction(rng):
    scores = rng.uniform(-1, 1, 40)
    other = np.concatenate([scores[:20], rng.uniform(-1, 1, 20)])
    r_all = correlate_maps(scores, np.arange(40), _scores(other))
    r_roi = correlate_maps(scores, np.arange(40), _scores(other),
                           restrict=range(20))
    assert r_roi == pytest.approx(1.0)
    assert r_all < r_roi


def test_correlate_needs_overlap(rng):
    with pytest.raises(ValueError, match="3"):
        correlate_maps(rng.uniform(-1, 1, 10), np.arange(10),
                       _scores(rng.uniform(-1, 1, 10)), restrict=[0, 1])


def test_hierarchy_sign_pattern(rng):
    # low-level voxels prefer early layers, semantic voxels late layers;
    # PC1 must correlate negatively with the low-level map and positively
    # with the semantic map
    v, layers = 80, 9
    level = np.concatenate([np.zeros(40), np.ones(40)])
    depth = np.linspace(0, 1, layers)
    c = np.empty((v, layers))
    for i in range(v):
        pref = 1.0 - np.abs(depth - level[i])
        c[i] = 0.4 + 0.3 * pref + 0.02 * rng.standard_normal(layers)
    perf = PerfMatrix(c=c, voxel_index_map=np.arange(v))
    pca = pca_svd(double_center(perf.c), k=2)
    low_map = _scores(np.where(level == 0, 0.6, 0.2)
                      + 0.01 * rng.standard_normal(v))
    sem_map = _scores(np.where(level == 1, 0.6, 0.2)
                      + 0.01 * rng.standard_normal(v))
    r_low = correlate_maps(pca.scores[:, 0], perf.voxel_index_map, low_map)
    r_sem = correlate_maps(pca.scores[:, 0], perf.voxel_index_map, sem_map)
    assert r_low * r_sem < 0  # opposite signs by construction
