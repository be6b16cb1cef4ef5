import numpy as np
import pytest

from meshacq.core import (
    Dataset,
    LabeledSample,
    ProblemKind,
    SelectionMask,
    ShapeError,
    SpatialGrid,
)
from meshacq.surrogate import (
    FitError,
    KernelRidgeModel,
    RidgeConfig,
    evaluate,
    fit_dataset,
    fit_fourier_ridge,
    fit_kernel_ridge,
    grid_search,
    interpolate_to_uniform,
    load_model,
    rbf_gram,
    rbf_kernel,
    save_model,
    training_arrays,
)


def test_rbf_kernel_examples():
    assert rbf_kernel([0.3, 0.1], [0.3, 0.1]) == 1.0
    assert rbf_kernel([0.0], [1.0], 1.0) == pytest.approx(np.exp(-1), abs=1e-12)
    assert rbf_kernel([0.0], [1.0], 1.0) == pytest.approx(0.3679, abs=1e-4)
    with pytest.raises(ShapeError):
        rbf_kernel([0.0, 1.0], [1.0])


def test_rbf_gram_matches_pairwise(rng):
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    g = rbf_gram(a, b, 0.7)
    ref = np.array([[rbf_kernel(x, y, 0.7) for y in b] for x in a])
    np.testing.assert_allclose(g, ref, atol=1e-14)


def test_two_far_points_closed_form():
    m = fit_kernel_ridge([[0.0], [100.0]], [1.0, 2.0], lam=0.1, center=False)
    np.testing.assert_allclose(m.weights[:, 0], [1 / 1.1, 2 / 1.1], atol=1e-12)
    np.testing.assert_allclose(m.weights[:, 0], [0.9091, 1.8182], atol=1e-4)


def test_single_point_interpolation_limit():
    m = fit_kernel_ridge([[0.2, 0.4]], [[3.0, -1.0]], lam=1e-9, center=False)
    np.testing.assert_allclose(m.predict([0.2, 0.4]), [3.0, -1.0], atol=1e-6)


def test_closed_form_matches_gradient_descent(rng):
    x = rng.normal(size=(15, 4))
    u = rng.normal(size=15)
    lam, gamma = 0.1, 0.5
    m = fit_kernel_ridge(x, u, lam, gamma, center=False)
    # minimize 0.5 a^T (K + lam I) a - a^T u; features are scaled by 1/sqrt(d)
    f = x / 2.0
    a_mat = rbf_gram(f, f, gamma) + lam * np.eye(15)
    step = 1.0 / np.linalg.eigvalsh(a_mat).max()
    alpha = np.zeros(15)
    for _ in range(20_000):
        alpha -= step * (a_mat @ alpha - u)
    assert np.abs(alpha - m.weights[:, 0]).max() <= 1e-4


def test_centering_and_prediction_shapes(rng):
    x = rng.normal(size=(10, 3))
    y = rng.normal(size=(10, 2)) + 5
    m = fit_kernel_ridge(x, y)
    np.testing.assert_allclose(m.offset, y.mean(0))
    assert m.predict(x[0]).shape == (2,)
    assert m.predict(x).shape == (10, 2)
    far = m.predict(x[0] + 1e3)
    np.testing.assert_allclose(far, y.mean(0), atol=1e-12)


def test_masked_fit_equals_per_coordinate_fits(rng):
    x = rng.normal(size=(12, 3))
    y = rng.normal(size=(12, 4))
    mask = rng.random((12, 4)) < 0.6
    mask[:, 3] = mask[:, 0]  # shared pattern
    m = fit_kernel_ridge(x, y, mask=mask)
    q = rng.normal(size=(3, 3))
    for j in range(4):
        rows = mask[:, j]
        ref = fit_kernel_ridge(x[rows], y[rows, j])
        np.testing.assert_allclose(m.predict(q)[:, j], ref.predict(q)[:, 0], atol=1e-10)
    with pytest.raises(ShapeError):
        fit_kernel_ridge(x, y, mask=mask[:, :2])


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_kernel_ridge([[0.0]], [1.0], lam=0)
    with pytest.raises(ShapeError):
        fit_kernel_ridge([[0.0], [1.0]], [1.0, 2.0, 3.0])
    with pytest.raises(FitError):
        fit_kernel_ridge(np.zeros((0, 2)), np.zeros((0, 1)))


def test_duplicate_inputs_factorize():
    x = np.zeros((5, 2))
    m = fit_kernel_ridge(x, np.arange(5.0), lam=1e-12)
    assert np.all(np.isfinite(m.weights))


def test_posterior_variance_vanishes_at_training_points(rng):
    x = rng.normal(size=(8, 2))
    m = fit_kernel_ridge(x, rng.normal(size=8), lam=1e-10)
    assert np.abs(m.posterior_variance(x)).max() <= 1e-8
    assert m.posterior_variance(x[0] + 50)[0] == pytest.approx(1.0)


def test_fourier_features_approach_kernel_ridge(rng):
    x = rng.normal(size=(20, 3))
    y = np.sin(x).sum(1)
    q = rng.normal(size=(200, 3))
    gamma = 0.5
    krr = fit_kernel_ridge(x, y, 0.1, gamma)
    ffr = fit_fourier_ridge(x, y, sigma=np.sqrt(2 * gamma), n_features=4000, lam=0.1, seed=1)
    r = np.corrcoef(krr.predict(q)[:, 0], ffr.predict(q)[:, 0])[0, 1]
    assert r >= 0.99


def test_interpolation_examples():
    g = SpatialGrid(np.linspace(0, 1, 5))
    s = LabeledSample(np.zeros(5), SelectionMask((4, 0), 2), [2.0, 0.0])
    np.testing.assert_allclose(interpolate_to_uniform(s, g), [0, 0.5, 1, 1.5, 2])
    dense = LabeledSample(np.zeros(5), SelectionMask.full(5), np.arange(5.0))
    np.testing.assert_array_equal(interpolate_to_uniform(dense, g), np.arange(5.0))
    s = LabeledSample(np.zeros(5), SelectionMask((2, 3), 2), [7.0, 9.0])
    out = interpolate_to_uniform(s, g)
    assert out[0] == out[1] == 7.0 and out[4] == 9.0
    with pytest.raises(ValueError):
        interpolate_to_uniform(LabeledSample(np.zeros(5), SelectionMask((2,), 1), [1.0]), g)


def test_interpolation_lattice_nearest_fill():
    g = SpatialGrid.lattice2d(4)
    s = LabeledSample(np.zeros(16), SelectionMask((0, 15), 2), [1.0, 5.0])
    out = interpolate_to_uniform(s, g).reshape(4, 4)
    assert out[0, 0] == 1.0 and out[3, 3] == 5.0 and out[0, 1] == 1.0 and out[3, 2] == 5.0


def test_dataset_fit_and_evaluate(small_corpus):
    grid = small_corpus.spec.grid()
    train = small_corpus.train[:40]
    cfg = RidgeConfig(input_scale=0.1)
    e40 = evaluate(fit_dataset(train, grid, cfg), small_corpus.test)
    e10 = evaluate(fit_dataset(train[:10], grid, cfg), small_corpus.test)
    truth = small_corpus.test.dense_outputs()
    e_mean = np.sqrt(np.mean((truth - train.dense_outputs().mean(0)) ** 2))
    assert e40 < min(e10, e_mean)
    # a model that reproduces the truth exactly scores zero
    perfect = fit_dataset(small_corpus.test, grid, RidgeConfig(lam=1e-10, input_scale=0.1))
    assert evaluate(perfect, small_corpus.test) < 1e-6
    sparse = Dataset(ProblemKind.BURGERS, len(grid))
    for s in train:
        idx = tuple(range(0, 129, 4))
        sparse.append(LabeledSample(s.input, SelectionMask(idx, len(idx)), s.observed[list(idx)]))
    x, y, mask = training_arrays(sparse, grid, "masked")
    assert mask.sum() == 40 * len(range(0, 129, 4))
    _, yi, mi = training_arrays(sparse, grid, "interpolate")
    assert mi is None and yi.shape == (40, 129)


def test_grid_search_prefers_sensible_lambda(rng):
    x = rng.uniform(-1, 1, size=(40, 1))
    y = np.sin(3 * x[:, 0]) + 0.01 * rng.normal(size=40)
    best, table = grid_search(x, y, lams=[1e-3, 10.0], gammas=[1.0], folds=5)
    assert best == (1e-3, 1.0) and len(table) == 2


def test_model_roundtrip(tmp_path, rng):
    x = rng.normal(size=(6, 3))
    m = fit_kernel_ridge(x, rng.normal(size=(6, 2)), input_scale=2.0)
    save_model(tmp_path / "k.bin", m)
    back = load_model(tmp_path / "k.bin")
    assert isinstance(back, KernelRidgeModel)
    np.testing.assert_array_equal(back.predict(x), m.predict(x))
    f = fit_fourier_ridge(x, rng.normal(size=6), n_features=16)
    save_model(tmp_path / "f.bin", f)
    np.testing.assert_array_equal(load_model(tmp_path / "f.bin").predict(x), f.predict(x))
