import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from ibis.errors import ConfigurationError, DegenerateProblemError, FormatError, InputError
from ibis.svm import (
    SvmConfig,
    compute_class_weights,
    decision_region_grid,
    fit_region_classifier,
    gram_matrix,
    kkt_violation,
    load_svm,
    pca_fit,
    rbf_kernel,
    save_svm,
    scale_gamma,
    smo_train_binary,
    svm_class_scores,
    svm_predict,
    train_multiclass,
)


def blobs(rng, centers, n_per, spread=0.3):
    X = np.concatenate([c + spread * rng.standard_normal((n_per, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per)
    return X, y


def dual_objective(alpha, y, K):
    ay = alpha * y
    return alpha.sum() - 0.5 * ay @ K @ ay


def qp_oracle(X, y, gamma, upper):
    """Dual optimum from a general-purpose constrained optimiser."""
    K = gram_matrix(X, X, gamma)
    Q = (y[:, None] * y[None, :]) * K
    res = minimize(
        lambda a: 0.5 * a @ Q @ a - a.sum(),
        np.zeros(len(y)),
        jac=lambda a: Q @ a - 1.0,
        bounds=list(zip(np.zeros(len(y)), upper)),
        constraints=[{"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y}],
        method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 500},
    )
    return -res.fun


# --- kernels and weights --------------------------------------------------------


def test_rbf_kernel_values(rng):
    x = rng.standard_normal(7)
    assert rbf_kernel(x, x, 0.3) == 1.0
    assert rbf_kernel([0.0, 0.0], [1.0, 1.0], 0.5) == pytest.approx(math.exp(-1), abs=1e-12)
    with pytest.raises(InputError):
        rbf_kernel([1.0], [1.0, 2.0], 1.0)


def test_gram_is_symmetric_psd(rng):
    X = rng.standard_normal((20, 5))
    K = gram_matrix(X, X, 0.7)
    np.testing.assert_allclose(K, K.T, atol=1e-15)
    assert np.linalg.eigvalsh(K).min() >= -1e-9
    assert K[3, 8] == pytest.approx(rbf_kernel(X[3], X[8], 0.7), abs=1e-12)


def test_scale_gamma_formula(rng):
    X = rng.standard_normal((30, 4)) * 2
    assert scale_gamma(X) == pytest.approx(1.0 / (4 * X.var()))


def test_class_weight_examples():
    w = compute_class_weights(["A"] * 10 + ["B"] * 30)
    assert w["A"] == pytest.approx(2.0) and w["B"] == pytest.approx(2 / 3)
    assert set(compute_class_weights([0, 1, 2, 0, 1, 2]).values()) == {1.0}
    with pytest.raises(InputError):
        compute_class_weights([])


@given(st.lists(st.integers(0, 5), min_size=1, max_size=60))
def test_class_weights_reproduce_sample_count(labels):
    w = compute_class_weights(labels)
    counts = {c: labels.count(c) for c in set(labels)}
    assert sum(w[c] * n for c, n in counts.items()) == pytest.approx(len(labels))


def test_config_validation():
    for bad in (SvmConfig(C=0), SvmConfig(gamma=-1.0), SvmConfig(gamma="auto"), SvmConfig(kernel="poly"),
                SvmConfig(class_weighting="x")):
        with pytest.raises(ConfigurationError):
            bad.validate()


# --- binary SMO ---------------------------------------------------------------------


def test_two_point_problem_matches_grid_search():
    X, y = np.array([[0.0, 0.0], [2.0, 0.0]]), np.array([-1, 1])
    svm = smo_train_binary(X, y)
    # equality constraint forces alpha_1 = alpha_2 = a; scan a over [0, C]
    K = gram_matrix(X, X, svm.gamma)
    grid = np.linspace(0, 1, 100_001)
    best = grid[np.argmax([dual_objective(np.array([a, a]), y.astype(float), K) for a in grid[::100]]) * 100]
    fine = grid[max(0, int(best * 1e5) - 100) : int(best * 1e5) + 101]
    best = fine[np.argmax([dual_objective(np.array([a, a]), y.astype(float), K) for a in fine])]
    np.testing.assert_allclose(svm.alpha, [best, best], atol=1e-5)
    assert len(svm.support) == 2
    assert np.array_equal(svm.predict(X), y)


def test_xor_needs_nonlinear_kernel():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([1, 1, -1, -1])
    assert np.sum(smo_train_binary(X, y).predict(X) == y) == 4
    assert np.sum(smo_train_binary(X, y, SvmConfig(kernel="linear")).predict(X) == y) <= 3


def test_single_class_is_degenerate():
    with pytest.raises(DegenerateProblemError):
        smo_train_binary(np.zeros((3, 2)), [1, 1, 1])
    with pytest.raises(InputError):
        smo_train_binary(np.zeros((2, 2)), [0, 1])


@pytest.mark.parametrize("weighting", ["balanced", "none"])
def test_smo_reaches_qp_optimum(weighting, rng):
    for _ in range(3):
        X = rng.standard_normal((25, 3))
        y = np.where(X[:, 0] + 0.5 * rng.standard_normal(25) > 0.3, 1, -1)
        svm = smo_train_binary(X, y, SvmConfig(class_weighting=weighting))
        K = gram_matrix(X, X, svm.gamma)
        ours = dual_objective(svm.alpha, y.astype(float), K)
        assert ours == pytest.approx(qp_oracle(X, y.astype(float), svm.gamma, svm.upper), abs=1e-3)


def test_kkt_box_and_equality(rng):
    X = rng.standard_normal((40, 4))
    y = np.where(rng.random(40) < 0.35, 1, -1)
    svm = smo_train_binary(X, y)
    assert svm.converged
    assert kkt_violation(svm, X, y).max() <= 1e-3
    assert np.all(svm.alpha >= 0) and np.all(svm.alpha <= svm.upper)
    assert abs(np.dot(svm.alpha, y)) < 1e-8
    assert np.all(np.diff(svm.objective) >= -1e-12)
    assert len(svm.dual_coef) <= len(y)


def test_duplicating_points_keeps_sign_pattern(rng):
    # duplication doubles each point's effective box, so the claim holds when
    # no multiplier sits at its bound; a separable set guarantees that here
    X, y = blobs(rng, [np.array([0.0, 0.0]), np.array([2.5, 1.5])], 15, spread=0.3)
    y = np.where(y == 0, -1, 1)
    probe = np.stack(np.meshgrid(np.linspace(-1.5, 4, 12), np.linspace(-1.5, 3, 12)), -1).reshape(-1, 2)
    cfg = SvmConfig(gamma=0.5, tolerance=1e-6)
    single = smo_train_binary(X, y, cfg)
    double = smo_train_binary(np.concatenate([X, X]), np.concatenate([y, y]), cfg)
    assert np.all(single.alpha < single.upper) and np.all(double.alpha < double.upper)
    assert np.array_equal(single.predict(probe), double.predict(probe))


def test_identical_inputs_identical_support(rng):
    X = rng.standard_normal((30, 3))
    y = np.where(X[:, 1] > 0, 1, -1)
    a, b = smo_train_binary(X, y), smo_train_binary(X, y)
    assert np.array_equal(a.support, b.support) and a.dual_coef.tobytes() == b.dual_coef.tobytes()


# --- multiclass ------------------------------------------------------------------------


@pytest.mark.parametrize("k,machines", [(2, 1), (5, 10), (8, 28)])
def test_pair_count(k, machines, rng):
    centers = [np.array([3.0 * math.cos(2 * math.pi * c / k), 3.0 * math.sin(2 * math.pi * c / k)]) for c in range(k)]
    X, y = blobs(rng, centers, 6)
    model = train_multiclass(X, y)
    assert len(model.machines) == machines
    _, votes = svm_predict(model, X)
    assert np.all(votes.sum(axis=1) == machines)


def test_two_class_reduces_to_binary_sign(rng):
    X, y = blobs(rng, [np.zeros(2), np.array([2.0, 0.0])], 10, spread=0.8)
    model = train_multiclass(X, y)
    probe = rng.uniform(-2, 4, (50, 2))
    labels, _ = svm_predict(model, probe)
    f = model.machines[0].decision_function(probe)
    assert np.array_equal(labels, np.where(f >= 0, 0, 1))


def test_blobs_are_separated(rng):
    centers = [np.array([0.0, 0.0, 0.0]), np.array([4.0, 0.0, 0.0]), np.array([0.0, 4.0, 0.0])]
    X, y = blobs(rng, centers, 20)
    Xt, yt = blobs(rng, centers, 20)
    model = train_multiclass(X, y)
    assert np.array_equal(svm_predict(model, X)[0], y)
    assert np.array_equal(svm_predict(model, Xt)[0], yt)
    assert np.array_equal(svm_class_scores(model, Xt).argmax(axis=1), yt)
    with pytest.raises(InputError):
        svm_predict(model, np.zeros((2, 4)))


def test_vote_tie_goes_to_stronger_margin():
    # three classes, each machine built by hand so every class gets one vote
    from ibis.svm import BinarySvm, SvmModel

    def const(bias, pos, neg):
        return BinarySvm(np.zeros((0, 1)), np.zeros(0), bias, 1.0, positive=pos, negative=neg)

    model = SvmModel(np.array([0, 1, 2]), [const(1.0, 0, 1), const(-3.0, 0, 2), const(2.0, 1, 2)], 1.0, 1)
    labels, votes = svm_predict(model, np.zeros((1, 1)))
    assert votes.tolist() == [[1, 1, 1]]
    assert labels[0] == 2  # class 2 won with |f| = 3
    model.machines[1].bias = -2.0  # now classes 1 and 2 tie on strength 2, lowest index wins
    assert svm_predict(model, np.zeros((1, 1)))[0][0] == 1


def test_balanced_weighting_helps_minority(rng):
    maj = rng.standard_normal((90, 2)) * 0.8
    mino = rng.standard_normal((10, 2)) * 0.8 + [1.2, 0.0]
    X = np.concatenate([maj, mino])
    y = np.r_[np.zeros(90, int), np.ones(10, int)]
    mt = rng.standard_normal((900, 2)) * 0.8 + [1.2, 0.0]
    rec = {}
    for w in ("balanced", "none"):
        model = train_multiclass(X, y, SvmConfig(class_weighting=w))
        rec[w] = np.mean(svm_predict(model, mt)[0] == 1)
    assert rec["balanced"] > rec["none"]


def test_svm_file_roundtrip(tmp_path, rng):
    X, y = blobs(rng, [np.zeros(3), np.ones(3) * 2, np.array([0.0, 3.0, 0.0])], 8)
    model = train_multiclass(X, y)
    save_svm(model, tmp_path / "a.ibsv")
    clone = load_svm(tmp_path / "a.ibsv")
    probe = rng.standard_normal((20, 3))
    assert svm_predict(clone, probe)[0].tolist() == svm_predict(model, probe)[0].tolist()
    np.testing.assert_array_equal(svm_class_scores(clone, probe), svm_class_scores(model, probe))
    save_svm(clone, tmp_path / "b.ibsv")
    assert (tmp_path / "a.ibsv").read_bytes() == (tmp_path / "b.ibsv").read_bytes()
    (tmp_path / "c.ibsv").write_bytes((tmp_path / "a.ibsv").read_bytes()[:-5])
    with pytest.raises(FormatError):
        load_svm(tmp_path / "c.ibsv")


# --- PCA and decision regions ------------------------------------------------------------


def test_pca_collinear_points():
    t = np.linspace(-3, 3, 25)
    pca = pca_fit(np.column_stack([t, 2 * t]), 2)
    np.testing.assert_allclose(pca.components[0], np.array([1.0, 2.0]) / math.sqrt(5), atol=1e-12)
    assert pca.explained_variance[1] == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(8, 30))
def test_pca_properties(seed, d, n):
    X = np.random.default_rng(seed).standard_normal((n, d)) @ np.random.default_rng(seed + 1).standard_normal((d, d))
    pca = pca_fit(X, d)
    np.testing.assert_allclose(pca.components @ pca.components.T, np.eye(d), atol=1e-9)
    assert np.all(np.diff(pca.explained_variance) <= 1e-12)
    np.testing.assert_allclose(pca.inverse_transform(pca.transform(X)), X, atol=1e-9)
    # oracle: singular values of the centred data
    sv = np.linalg.svd(X - X.mean(0), compute_uv=False)
    np.testing.assert_allclose(pca.explained_variance, sv**2 / (n - 1), rtol=1e-8, atol=1e-10)
    for row in pca.components:
        assert row[np.flatnonzero(np.abs(row) > 1e-12)[0]] > 0


def test_pca_rejects_too_many_components(rng):
    with pytest.raises(ConfigurationError):
        pca_fit(rng.standard_normal((3, 5)), 4)


def test_region_grid(rng):
    centers = [np.array([0.0, 0.0, 0.0, 0.0]), np.array([5.0, 0.0, 0.0, 0.0]), np.array([0.0, 5.0, 0.0, 0.0])]
    X, y = blobs(rng, centers, 15)
    pca = pca_fit(X, 2)
    svm2 = fit_region_classifier(X, y, pca)
    grid = decision_region_grid(svm2, pca, X, y, resolution=50)
    assert grid.labels.size == 2500
    assert set(np.unique(grid.labels)) <= set(y.tolist())
    assert np.array_equal(grid.point_predictions, y)
    for (px, py), pred in zip(grid.points, grid.point_predictions):
        cell = grid.labels[np.argmin(np.abs(grid.ys - py)), np.argmin(np.abs(grid.xs - px))]
        assert cell == pred
    with pytest.raises(ConfigurationError):
        decision_region_grid(svm2, pca, X, y, resolution=0)


def test_region_csv(tmp_path, rng):
    X, y = blobs(rng, [np.zeros(3), np.full(3, 4.0)], 10)
    pca = pca_fit(X, 2)
    grid = decision_region_grid(fit_region_classifier(X, y, pca), pca, X, y, resolution=7)
    grid.write_csv(tmp_path / "g.csv", tmp_path / "p.csv")
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert rows[0] == "x,y,label" and len(rows) == 50
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "x,y,label,predicted"
