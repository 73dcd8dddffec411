import numpy as np
import pytest

from voxenc.ridge import (BandedConfig, CvPlan, banded_ridge_fit,
                          fit_ridge_cv, load_fit, predict, sample_chunks,
                          save_fit, svd_ridge_path)
from voxenc.simulate import SimSpec, gen_dataset
from voxenc.varpart import evaluate


def normal_equations(x, y, lam):
    """Independent oracle: dense solve of (X'X + lam I) B = X'Y."""
    p = x.shape[1]
    return np.linalg.solve(x.T @ x + lam * np.eye(p), x.T @ y)


# ---------------------------------------------------------------------------
# SVD path


def test_orthonormal_closed_form(rng):
    q, _ = np.linalg.qr(rng.standard_normal((30, 6)))
    y = rng.standard_normal((30, 4))
    w = svd_ridge_path(q, y, [1.0])[0]
    assert np.allclose(w, q.T @ y / 2.0, atol=1e-12)


def test_lambda_zero_is_ols(rng):
    x = rng.standard_normal((40, 6))
    y = rng.standard_normal((40, 3))
    w = svd_ridge_path(x, y, [0.0])[0]
    resid = y - x @ w
    assert np.abs(x.T @ resid).max() < 1e-8


def test_matches_normal_equations(rng):
    x = rng.standard_normal((60, 8))
    y = rng.standard_normal((60, 3))
    w = svd_ridge_path(x, y, [10.0])[0]
    assert np.abs(w - normal_equations(x, y, 10.0)).max() < 1e-8


def test_weight_norm_monotone_in_lambda(rng):
    x = rng.standard_normal((50, 10))
    y = rng.standard_normal((50, 4))
    grid = np.logspace(-3, 4, 12)
    path = svd_ridge_path(x, y, grid)
    norms = np.linalg.norm(path, axis=1)  # (n_grid, V)
    assert np.all(np.diff(norms, axis=0) <= 1e-10)


def test_negative_lambda_rejected(rng):
    with pytest.raises(ValueError, match="non-negative"):
        svd_ridge_path(rng.standard_normal((10, 2)),
                       rng.standard_normal((10, 1)), [-1.0])


def test_nonfinite_rejected(rng):
    x = rng.standard_normal((10, 2))
    x[0, 0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        svd_ridge_path(x, rng.standard_normal((10, 1)), [1.0])


# ---------------------------------------------------------------------------
# Chunk sampling


def test_chunks_construction():
    plan = CvPlan(seed=0)
    ranges = sample_chunks(5000, plan, iteration=0)
    assert len(ranges) == 40
    assert all(hi - lo == 10 for lo, hi in ranges)
    flat = sorted(ranges)
    assert all(a[1] <= b[0] for a, b in zip(flat, flat[1:]))  # disjoint


def test_chunks_deterministic():
    plan = CvPlan(seed=3)
    assert sample_chunks(2000, plan, 7) == sample_chunks(2000, plan, 7)
    assert sample_chunks(2000, plan, 7) != sample_chunks(2000, plan, 8)


def test_chunks_overbudget_rejected():
    with pytest.raises(ValueError, match="50%"):
        sample_chunks(300, CvPlan(), 0)


# ---------------------------------------------------------------------------
# CV fitting


@pytest.fixture(scope="module")
def noiseless_ds():
    spec = SimSpec(n_stories=2, story_len_tr=1200, test_len_tr=300,
                   n_voxels=30, n_features=10, noise_sd=0.0, seed=21)
    return gen_dataset(spec)


@pytest.fixture(scope="module")
def small_plan():
    return CvPlan(n_iterations=10, n_chunks=20, chunk_len_tr=10, seed=0)


def test_noiseless_recovery(noiseless_ds, small_plan):
    x_tr, y_tr, _ = noiseless_ds.design("space0", "train")
    x_te, y_te, _ = noiseless_ds.design("space0", "test")
    fit = fit_ridge_cv(x_tr, y_tr, plan=small_plan)
    rho = evaluate(y_te, predict(fit, x_te)).rho
    assert np.nanmin(rho) > 0.999
    # lambda at or near the grid minimum
    assert np.median(fit.lambda_index) <= 2


def test_pure_noise_scores_near_zero(rng, small_plan):
    x = rng.standard_normal((1200, 10))
    y = rng.standard_normal((1200, 30))
    fit = fit_ridge_cv(x, y, plan=small_plan)
    assert abs(np.nanmean(fit.best_cv)) < 0.05
    assert np.isfinite(fit.cv_curve).all()


def test_noisier_voxel_selects_larger_lambda():
    hits = 0
    runs = 20
    for run in range(runs):
        rng = np.random.default_rng(run)
        x = rng.standard_normal((600, 60))
        w = rng.standard_normal((60, 1))
        clean = x @ w
        clean /= clean.std()
        y = np.hstack([clean + 0.2 * rng.standard_normal(clean.shape),
                       clean + 2.0 * rng.standard_normal(clean.shape)])
        plan = CvPlan(n_iterations=20, n_chunks=10, chunk_len_tr=10, seed=run)
        fit = fit_ridge_cv(x, y, plan=plan)
        if fit.lambda_per_voxel[1] >= fit.lambda_per_voxel[0]:
            hits += 1
    assert hits >= 0.9 * runs


def test_fit_deterministic(noiseless_ds, small_plan):
    x_tr, y_tr, _ = noiseless_ds.design("space0", "train")
    f1 = fit_ridge_cv(x_tr, y_tr, plan=small_plan)
    f2 = fit_ridge_cv(x_tr, y_tr, plan=small_plan)
    assert np.array_equal(f1.weights, f2.weights)
    assert np.array_equal(f1.cv_curve, f2.cv_curve)


def test_fit_thread_count_invariant(noiseless_ds, small_plan):
    x_tr, y_tr, _ = noiseless_ds.design("space0", "train")
    f1 = fit_ridge_cv(x_tr, y_tr, plan=small_plan, n_threads=1)
    f8 = fit_ridge_cv(x_tr, y_tr, plan=small_plan, n_threads=8)
    assert np.abs(f1.weights - f8.weights).max() < 1e-10
    assert np.abs(f1.cv_curve - f8.cv_curve).max() < 1e-10


def test_degenerate_voxel_flagged(rng, small_plan):
    x = rng.standard_normal((1200, 6))
    y = rng.standard_normal((1200, 4))
    y[:, 2] = 1.0  # constant voxel: zero variance in every fold
    fit = fit_ridge_cv(x, y, plan=small_plan)
    assert fit.flagged[2]
    assert fit.lambda_per_voxel[2] == fit.grid[-1]


# ---------------------------------------------------------------------------
# Prediction


def test_predict_zero_input(noiseless_ds, small_plan):
    x_tr, y_tr, _ = noiseless_ds.design("space0", "train")
    fit = fit_ridge_cv(x_tr, y_tr, plan=small_plan)
    assert np.all(predict(fit, np.zeros_like(x_tr[:5])) == 0)


def test_predict_shape_mismatch(noiseless_ds, small_plan):
    x_tr, y_tr, _ = noiseless_ds.design("space0", "train")
    fit = fit_ridge_cv(x_tr, y_tr, plan=small_plan)
    with pytest.raises(ValueError, match="columns"):
        predict(fit, x_tr[:, :3])


def test_training_residual_bounded_by_ols(rng):
    x = rng.standard_normal((80, 6))
    y = rng.standard_normal((80, 2))
    w_ols = svd_ridge_path(x, y, [0.0])[0]
    w_small = svd_ridge_path(x, y, [1e-8])[0]
    r_ols = np.linalg.norm(y - x @ w_ols)
    r_ridge = np.linalg.norm(y - x @ w_small)
    assert r_ridge <= r_ols + 1e-6


# ---------------------------------------------------------------------------
# Banded ridge


def test_banded_same_lambda_equals_plain(rng):
    x = rng.standard_normal((200, 12))
    y = rng.standard_normal((200, 5))
    lam = 4.2
    plain = svd_ridge_path(x, y, [lam])[0]
    cfg = BandedConfig(band_slices=((0, 7), (7, 12)), grid1=(lam,),
                       grid2=(lam,))
    plan = CvPlan(n_iterations=2, n_chunks=4, chunk_len_tr=5, seed=0)
    fit = banded_ridge_fit(x, y, cfg, plan=plan)
    assert np.abs(fit.weights - plain).max() < 1e-8


def test_banded_noise_band_gets_larger_lambda():
    spec = SimSpec(n_stories=2, story_len_tr=1200, test_len_tr=200,
                   n_voxels=40, n_features=8, noise_sd=0.3, seed=33)
    ds = gen_dataset(spec)
    x_tr, y_tr, _ = ds.design("space0", "train")
    rng = np.random.default_rng(99)
    noise_band = rng.standard_normal(x_tr.shape)
    x = np.hstack([x_tr, noise_band])
    grid = tuple(np.logspace(-1, 4, 5))
    cfg = BandedConfig(band_slices=((0, x_tr.shape[1]), (x_tr.shape[1],
                                                         x.shape[1])),
                       grid1=grid, grid2=grid)
    plan = CvPlan(n_iterations=8, n_chunks=20, chunk_len_tr=10, seed=1)
    fit = banded_ridge_fit(x, y_tr, cfg, plan=plan)
    frac = np.mean(fit.lambda2_per_voxel >= fit.lambda_per_voxel)
    assert frac >= 0.8


def test_banded_joint_not_worse_than_singles():
    spec = SimSpec(n_stories=2, story_len_tr=1200, test_len_tr=200,
                   n_voxels=30, n_features=8, noise_sd=0.5, seed=44)
    ds = gen_dataset(spec)
    x_tr, y_tr, _ = ds.design("space0", "train")
    rng = np.random.default_rng(5)
    noise = rng.standard_normal(x_tr.shape)
    joint = np.hstack([x_tr, noise])
    plan = CvPlan(n_iterations=8, n_chunks=20, chunk_len_tr=10, seed=2)
    grid = tuple(np.logspace(-2, 5, 6))
    single1 = fit_ridge_cv(x_tr, y_tr, grid=grid, plan=plan)
    single2 = fit_ridge_cv(noise, y_tr, grid=grid, plan=plan)
    cfg = BandedConfig(band_slices=((0, x_tr.shape[1]),
                                    (x_tr.shape[1], joint.shape[1])),
                       grid1=grid, grid2=grid)
    banded = banded_ridge_fit(joint, y_tr, cfg, plan=plan)
    best_single = np.maximum(single1.best_cv, single2.best_cv)
    assert np.mean(banded.best_cv >= best_single - 0.02) > 0.9


def test_banded_config_validation():
    with pytest.raises(ValueError, match="partition"):
        BandedConfig(band_slices=((0, 5), (6, 10)))
    with pytest.raises(ValueError, match="grid"):
        BandedConfig(band_slices=((0, 5), (5, 10)), grid1=())


# ---------------------------------------------------------------------------
# Serialization


def test_fit_save_load_roundtrip(tmp_path, noiseless_ds, small_plan):
    x_tr, y_tr, _ = noiseless_ds.design("space0", "train")
    fit = fit_ridge_cv(x_tr, y_tr, plan=small_plan)
    save_fit(fit, tmp_path / "fit")
    back = load_fit(tmp_path / "fit")
    assert np.array_equal(back.weights, fit.weights)
    assert np.array_equal(back.lambda_per_voxel, fit.lambda_per_voxel)
    assert np.array_equal(back.cv_curve, fit.cv_curve)
    assert back.seed == fit.seed
