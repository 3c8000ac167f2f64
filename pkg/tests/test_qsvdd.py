import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlmchd import qp, qsvdd
from qlmchd.kernels import KernelSpec, gram, gram_cross

from _oracles import qsvdd_primal_minimize, qsvdd_primal_value

LIN = KernelSpec.linear()
TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
OUTLIER = np.array([[6.0, 5.0]])


def fit_linear(X, B, C, tol=1e-9):
    X = np.asarray(X, dtype=float)
    model = qsvdd.fit_qsvdd(gram(LIN, X), B, C, tol=tol)
    return model, qsvdd.explicit_center(model, X)


def test_assemble_dual_b0_is_classical_svdd():
    K = gram(KernelSpec.rbf(1.3), np.random.default_rng(0).standard_normal((5, 2)))
    problem = qsvdd.assemble_dual(K, 0.0, 1.0)
    np.testing.assert_array_equal(problem.Q, 2 * K)
    np.testing.assert_array_equal(problem.p, -np.diag(K))


def test_assemble_dual_general_form():
    K = gram(LIN, [[1.0, 2.0], [0.0, 1.0], [3.0, -1.0]])
    B, n = 0.7, 3
    problem = qsvdd.assemble_dual(K, B, 0.5)
    np.testing.assert_allclose(problem.Q, 2 * K / (1 + B))
    np.testing.assert_allclose(problem.p, 2 * B / (n * (1 + B)) * K.sum(axis=1) - np.diag(K))
    assert problem.C == 0.5


def test_assemble_dual_errors():
    K = np.eye(3)
    with pytest.raises(ValueError):
        qsvdd.assemble_dual(K, -1.0, 1.0)
    with pytest.raises(qp.QpInfeasibleError):
        qsvdd.assemble_dual(K, 0.0, 0.2)


def test_two_point_svdd():
    model, center = fit_linear([[0.0], [2.0]], 0.0, 1.0)
    np.testing.assert_allclose(model.alpha, [0.5, 0.5], atol=1e-9)
    np.testing.assert_allclose(center, [1.0], atol=1e-9)
    assert model.radius_sq == pytest.approx(1.0, abs=1e-9)


def test_huge_B_centers_on_mean():
    X = np.random.default_rng(1).standard_normal((9, 3))
    model = qsvdd.fit_qsvdd(gram(KernelSpec.rbf(1.0), X), 1e6, 1.0)
    assert np.abs(model.beta - 1 / 9).max() <= 1e-6


def test_equilateral_triangle():
    model, center = fit_linear(TRIANGLE, 0.0, 1.0)
    np.testing.assert_allclose(model.alpha, [1 / 3] * 3, atol=1e-7)
    np.testing.assert_allclose(center, TRIANGLE.mean(axis=0), atol=1e-7)


def test_outlier_capped_by_C():
    X = np.vstack([TRIANGLE, OUTLIER])
    centroid = X.mean(axis=0)
    hard, c_hard = fit_linear(X, 0.0, 1.0)
    soft, c_soft = fit_linear(X, 0.0, 0.3)
    assert soft.alpha[3] == pytest.approx(0.3, abs=1e-12)
    assert np.linalg.norm(c_soft - X[3]) > np.linalg.norm(c_hard - X[3])
    # the gravity term pulls the center toward the centroid
    _, c_b5 = fit_linear(X, 5.0, 0.3)
    assert np.linalg.norm(c_b5 - centroid) < np.linalg.norm(c_soft - centroid)


def test_gravity_pull_monotone():
    rng = np.random.default_rng(7)
    X = np.vstack([rng.standard_normal((12, 2)), [[9.0, -7.0]]])
    mean = X.mean(axis=0)
    dists = [np.linalg.norm(fit_linear(X, B, 1.0)[1] - mean) for B in (0, 1, 10, 100)]
    assert all(b <= a + 1e-9 for a, b in zip(dists, dists[1:]))


def test_center_coefficients_examples():
    np.testing.assert_allclose(qsvdd.center_coefficients([1, 0, 0, 0], 1.0), [0.625, 0.125, 0.125, 0.125])
    alpha = np.array([0.2, 0.5, 0.3])
    np.testing.assert_array_equal(qsvdd.center_coefficients(alpha, 0.0), alpha)
    assert np.abs(qsvdd.center_coefficients(alpha, 1e9) - 1 / 3).max() <= 1e-8
    with pytest.raises(ValueError):
        qsvdd.center_coefficients(alpha, -1.5)


def test_dist_sq_examples():
    one = qsvdd.fit_qsvdd(np.array([[2.5]]), 1.0, 1.0)
    assert qsvdd.dist_sq_to_center(one, [2.5], 2.5) == 0.0
    assert one.radius_sq == 0.0

    model, _ = fit_linear([[0.0], [2.0]], 0.0, 1.0)
    z = np.array([[5.0]])
    k_z = gram_cross(LIN, [[0.0], [2.0]], z)[:, 0]
    assert qsvdd.dist_sq_to_center(model, k_z, 25.0) == pytest.approx(16.0, abs=1e-8)
    with pytest.raises(ValueError):
        qsvdd.dist_sq_to_center(model, [1.0, 2.0, 3.0], 1.0)


def test_dist_sq_rbf_square_termwise():
    sigma = 1.0
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    spec = KernelSpec.rbf(sigma)
    model = qsvdd.fit_qsvdd(gram(spec, X), 1.0, 1.0)
    z = np.array([0.5, 0.5])
    k = lambda a, b: math.exp(-((a - b) ** 2).sum() / (2 * sigma**2))
    beta = model.beta
    expected = k(z, z)
    expected -= 2 * sum(beta[i] * k(X[i], z) for i in range(4))
    expected += sum(beta[i] * beta[j] * k(X[i], X[j]) for i in range(4) for j in range(4))
    got = qsvdd.dist_sq_to_center(model, gram_cross(spec, X, z[None, :])[:, 0], 1.0)
    assert got == pytest.approx(expected, abs=1e-12)


def test_contains():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((15, 2))
    model = qsvdd.fit_qsvdd(gram(LIN, X), 0.5, 0.2)
    K_x = gram(LIN, X)
    inside = qsvdd.contains(model, K_x, np.diag(K_x), tol=1e-6)
    assert inside[model.alpha < model.C - 1e-9].all()
    far = 1e3 * np.ones((1, 2))
    assert not qsvdd.contains(model, gram_cross(LIN, X, far)[:, 0], float(far[0] @ far[0]))


def test_n_equals_one():
    model = qsvdd.fit_qsvdd(np.array([[1.0]]), 3.0, 1.0)
    assert model.alpha.tolist() == [1.0] and model.beta.tolist() == [1.0] and model.radius_sq == 0.0


def test_classical_svdd_agrees_at_B0():
    K = gram(KernelSpec.rbf(0.8), np.random.default_rng(5).standard_normal((20, 3)))
    a = qsvdd.fit_qsvdd(K, 0.0, 0.2)
    b = qsvdd.fit_svdd(K, 0.2)
    np.testing.assert_array_equal(a.alpha, b.alpha)
    np.testing.assert_array_equal(a.beta, b.beta)
    assert a.radius_sq == b.radius_sq


def test_radius_fallback_when_all_at_cap():
    # n*C == 1: every alpha sits at C, so no margin support vector exists
    X = np.array([[0.0], [1.0], [3.0], [7.0]])
    model, center = fit_linear(X, 0.0, 0.25)
    np.testing.assert_allclose(model.alpha, 0.25)
    d = ((X[:, 0] - center[0]) ** 2)
    # the radius is bracketed by the KKT conditions: inside nobody is forced, outside everyone is
    assert 0.0 <= model.radius_sq <= d.min() + 1e-12
    assert qsvdd.primal_objective(X, center, model.radius_sq, 0.0, 0.25) == pytest.approx(
        qsvdd.dual_objective(model), rel=1e-9
    )


def test_primal_oracle_50_instances():
    """Dual-derived centers agree with direct primal minimization (center 1e-4, objective 1e-4 relative)."""
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    cases = 0
    for B in (0.0, 0.5, 2.0, 10.0):
        for _ in range(13 if B != 10.0 else 11):
            n = int(rng.integers(2, 9))
            X = rng.standard_normal((n, 2)) * rng.uniform(0.5, 3.0)
            if rng.random() < 0.4:
                X[0] += rng.uniform(3, 8) * rng.standard_normal(2)  # a planted outlier
            C = 1.0 if rng.random() < 0.3 else float(rng.uniform(1.0 / n + 0.02, 1.0))
            model, center = fit_linear(X, B, C)
            ref_center, ref_value = qsvdd_primal_minimize(X, B, C)
            value = qsvdd_primal_value(center, X, B, C)
            assert value == pytest.approx(ref_value, rel=1e-4, abs=1e-10)
            np.testing.assert_allclose(center, ref_center, atol=1e-4)
            # strong duality, and the fitted radius attains the primal optimum
            assert qsvdd.dual_objective(model) == pytest.approx(ref_value, rel=1e-4)
            assert qsvdd.primal_objective(X, center, model.radius_sq, B, C) == pytest.approx(ref_value, rel=1e-4)
            cases += 1
    assert cases == 50
    assert time.perf_counter() - t0 < 120


@st.composite
def fitted(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 25))
    X = rng.standard_normal((n, int(rng.integers(1, 4))))
    B = draw(st.sampled_from([0.0, 0.3, 1.0, 4.0, 50.0]))
    C = draw(st.sampled_from([1.0, 0.5, 0.2])) if n * 0.2 >= 1 else 1.0
    spec = draw(st.sampled_from([LIN, KernelSpec.rbf(0.7), KernelSpec.rbf(2.0)]))
    K = gram(spec, X)
    return K, B, C, qsvdd.fit_qsvdd(K, B, C)


@settings(max_examples=50, deadline=None)
@given(fitted())
def test_model_invariants(case):
    K, B, C, model = case
    assert abs(model.alpha.sum() - 1) <= 1e-9
    assert model.alpha.min() >= -1e-12 and model.alpha.max() <= C + 1e-12
    assert abs(model.beta.sum() - 1) <= 1e-12
    assert model.radius_sq >= 0
    if B == 0:
        np.testing.assert_array_equal(model.beta, model.alpha)
    d = qsvdd.dist_sq_to_center(model, K, np.diag(K))
    assert d.min() >= -1e-9
    margin = model.margin_support_mask(1e-6)
    if margin.any():
        assert np.all(np.abs(d[margin] - model.radius_sq) <= 1e-4 * max(model.radius_sq, 1e-12) + 1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.5, 2.0, 10.0]))
def test_strong_duality_linear(seed, B):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 10))
    X = rng.standard_normal((n, 2))
    C = float(rng.uniform(1.0 / n + 0.01, 1.0))
    model, center = fit_linear(X, B, C)
    primal = qsvdd_primal_value(center, X, B, C)
    assert primal == pytest.approx(qsvdd.dual_objective(model), rel=1e-5, abs=1e-9)
