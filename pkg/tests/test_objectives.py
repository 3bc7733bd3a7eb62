import numpy as np
import pytest

from graphar.features import degree_map, fit_svd_projection
from graphar.generator import GeneratorParams, generate
from graphar.objectives import (
    Hyperparams,
    ProblemData,
    dual_certificates,
    grad_smooth_J,
    grad_smooth_L,
    loss_J,
    loss_L,
    make_problem,
    phi,
    phi_norm,
    smooth_L,
)

import oracles
from conftest import random_problem


def point(rng, data, r=None):
    S = rng.standard_normal((data.n, data.n))
    W = rng.standard_normal((data.d, data.d))
    if r is None:
        return S, W
    return rng.standard_normal((data.n, r)), rng.standard_normal((data.n, r)), W


def ls_solution(data):
    W, *_ = np.linalg.lstsq(data.X_prev, data.X_next, rcond=None)
    return W


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        Hyperparams(tau=-1)
    with pytest.raises(ValueError):
        Hyperparams(alpha=1.0)
    with pytest.raises(ValueError):
        Hyperparams(rank=0)


def test_problem_data_blocks(problem):
    np.testing.assert_array_equal(problem.F_T, problem.X_next[-problem.fmap.m:])
    assert problem.T == 3 and problem.d == 2 and problem.n == 6


def test_problem_data_shape_check(problem):
    with pytest.raises(ValueError):
        ProblemData(problem.X_prev, problem.X_next[:-1], problem.F_T, problem.fmap)


def test_phi_zero_and_pure_s(problem):
    rng = np.random.default_rng(1)
    z1, z2 = phi(problem, np.zeros((6, 6)), np.zeros((2, 2)))
    assert not z1.any() and not z2.any()
    S = rng.standard_normal((6, 6))
    b1, b2 = phi(problem, S, np.zeros((2, 2)))
    assert not b1.any()
    np.testing.assert_array_equal(b2, problem.fmap.apply(S))


def test_phi_linear(problem):
    rng = np.random.default_rng(2)
    S1, W1 = point(rng, problem)
    S2, W2 = point(rng, problem)
    lhs = phi(problem, S1 + S2, W1 + W2)
    a, b = phi(problem, S1, W1), phi(problem, S2, W2)
    for x, y, z in zip(lhs, a, b):
        np.testing.assert_allclose(x, y + z, atol=1e-12)


def test_phi_shape_error(problem):
    with pytest.raises(ValueError):
        phi(problem, np.zeros((5, 5)), np.zeros((2, 2)))


def test_loss_at_zero(problem):
    val = loss_L(problem, Hyperparams(1, 1, 1), np.zeros((6, 6)), np.zeros((2, 2)))
    assert val == pytest.approx(np.sum(problem.X_next**2) / 2)


def test_loss_least_squares_residual(problem):
    W = ls_solution(problem)
    S = problem.fmap.adjoint(problem.F_T @ W)  # projection is orthonormal so F(S) = F_T W
    resid = np.sum((problem.X_prev @ W - problem.X_next) ** 2) / problem.d
    assert loss_L(problem, Hyperparams(), S, W) == pytest.approx(resid, rel=1e-12)


def test_loss_penalties_only():
    fmap = degree_map(4)
    data = ProblemData(np.zeros((2, 4)), np.zeros((2, 4)), np.zeros((1, 4)), fmap)
    rng = np.random.default_rng(3)
    S, W = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    S -= S.mean(axis=1, keepdims=True)  # zero row sums, so F(S) = 0 as well
    p = Hyperparams(0.3, 0.2, 0.1)
    expect = 0.3 * np.linalg.svd(S, compute_uv=False).sum() + 0.2 * np.abs(S).sum() + 0.1 * np.abs(W).sum()
    assert loss_L(data, p, S, W) == pytest.approx(expect, rel=1e-12)


def test_loss_matches_phi_form(problem):
    rng = np.random.default_rng(4)
    mat = oracles.phi_matrix(problem)
    target = np.concatenate([problem.X_next.ravel(), np.zeros(problem.F_T.size)])
    p = Hyperparams(0.2, 0.1, 0.3)
    for _ in range(10):
        S, W = point(rng, problem)
        x = np.concatenate([S.ravel(), W.ravel()])
        pen = 0.2 * np.linalg.norm(S, "nuc") + 0.1 * np.abs(S).sum() + 0.3 * np.abs(W).sum()
        expect = np.sum((mat @ x - target) ** 2) / problem.d + pen
        assert loss_L(problem, p, S, W) == pytest.approx(expect, abs=1e-10)


def test_loss_convex_along_segments(problem):
    rng = np.random.default_rng(5)
    p = Hyperparams(0.5, 0.1, 0.2)
    for _ in range(20):
        x, y = point(rng, problem), point(rng, problem)
        fx, fy = loss_L(problem, p, *x), loss_L(problem, p, *y)
        for lam in (0.25, 0.5, 0.75):
            mid = [lam * a + (1 - lam) * b for a, b in zip(x, y)]
            assert loss_L(problem, p, *mid) <= lam * fx + (1 - lam) * fy + 1e-10


def test_loss_nonnegative(problem):
    rng = np.random.default_rng(6)
    for _ in range(20):
        assert loss_L(problem, Hyperparams(0.1, 0.1, 0.1), *point(rng, problem)) >= 0


def test_grad_L_finite_differences(problem):
    rng = np.random.default_rng(7)
    for _ in range(10):
        S, W = point(rng, problem)
        G_S, G_W = grad_smooth_L(problem, S, W)
        fd_S = oracles.central_difference(lambda X: smooth_L(problem, X, W), S)
        fd_W = oracles.central_difference(lambda X: smooth_L(problem, S, X), W)
        np.testing.assert_allclose(G_S, fd_S, rtol=1e-4, atol=1e-6)
        np.testing.assert_allclose(G_W, fd_W, rtol=1e-4, atol=1e-6)


def test_grad_L_at_zero(problem):
    G_S, G_W = grad_smooth_L(problem, np.zeros((6, 6)), np.zeros((2, 2)))
    assert not G_S.any()
    np.testing.assert_allclose(G_W, -(2 / problem.d) * problem.X_prev.T @ problem.X_next)


def test_grad_L_vanishes_at_unpenalized_minimum(problem):
    W = ls_solution(problem)
    S = problem.fmap.adjoint(problem.F_T @ W)
    G_S, G_W = grad_smooth_L(problem, S, W)
    np.testing.assert_allclose(G_S, 0, atol=1e-10)
    np.testing.assert_allclose(G_W, 0, atol=1e-10)


def test_loss_J_reduces_to_L(problem):
    rng = np.random.default_rng(8)
    U, V, W = point(rng, problem, r=3)
    p = Hyperparams(kappa=0.4)
    assert loss_J(problem, p, U, V, W) == pytest.approx(loss_L(problem, p, U @ V.T, W), rel=1e-12)
    pg = Hyperparams(gamma=0.2)
    zero = np.zeros_like(U)
    expect = loss_L(problem, Hyperparams(), np.zeros((6, 6)), W) + 0.2 * np.abs(V).sum()
    assert loss_J(problem, pg, zero, V, W) == pytest.approx(expect, rel=1e-12)


def test_loss_J_straight_line_recomputation(problem):
    rng = np.random.default_rng(9)
    U, V, W = point(rng, problem, r=2)
    P = problem.fmap.projection
    S = U @ V.T
    r1 = problem.X_prev @ W - problem.X_next
    r2 = problem.F_T @ W - S @ P
    expect = (np.sum(r1 * r1) + np.sum(r2 * r2)) / problem.d
    expect += 0.1 * (np.abs(U).sum() + np.abs(V).sum()) + 0.3 * np.abs(W).sum()
    assert loss_J(problem, Hyperparams(gamma=0.1, kappa=0.3), U, V, W) == pytest.approx(expect, rel=1e-12)


def test_grad_J_finite_differences(problem):
    rng = np.random.default_rng(10)
    for _ in range(10):
        U, V, W = point(rng, problem, r=3)
        G = grad_smooth_J(problem, U, V, W)
        f = lambda U_, V_, W_: smooth_L(problem, U_ @ V_.T, W_)
        fds = (
            oracles.central_difference(lambda X: f(X, V, W), U),
            oracles.central_difference(lambda X: f(U, X, W), V),
            oracles.central_difference(lambda X: f(U, V, X), W),
        )
        for g, fd in zip(G, fds):
            np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-6)


def test_grad_J_degenerate_chain_rule(problem):
    rng = np.random.default_rng(11)
    U = rng.standard_normal((6, 6))
    W = rng.standard_normal((2, 2))
    G_U, _, G_W = grad_smooth_J(problem, U, np.eye(6), W)
    G_S, G_W2 = grad_smooth_L(problem, U, W)
    np.testing.assert_allclose(G_U, G_S, atol=1e-12)
    np.testing.assert_allclose(G_W, G_W2, atol=1e-12)


def test_grad_J_zero_at_ls_with_zero_factors(problem):
    # with U = V = 0 the W-gradient is the plain least-squares gradient of both blocks
    Z = np.zeros((6, 2))
    A = np.vstack([problem.X_prev, problem.F_T])
    b = np.vstack([problem.X_next, np.zeros_like(problem.F_T)])
    W, *_ = np.linalg.lstsq(A, b, rcond=None)
    for g in grad_smooth_J(problem, Z, Z, W):
        np.testing.assert_allclose(g, 0, atol=1e-10)


def test_phi_norm_matches_materialized(problem):
    assert phi_norm(problem, tol=1e-10) == pytest.approx(
        np.linalg.norm(oracles.phi_matrix(problem), 2), rel=1e-6)


def test_phi_norm_small_explicit_map():
    data = random_problem(12, n=3, T=2, d=2)
    assert phi_norm(data, tol=1e-10) == pytest.approx(
        np.linalg.norm(oracles.phi_matrix(data), 2), rel=1e-6)


def test_duality_identity():
    inst = generate(GeneratorParams(n=12, T=4, r=3, seed=2))
    obs = inst.observed
    data = make_problem(obs, fit_svd_projection(np.sum(obs, axis=0), 3))
    rng = np.random.default_rng(0)
    W0 = rng.standard_normal((3, 3))
    cert = dual_certificates(data, W0, inst.target)
    for _ in range(100):
        S, W = point(rng, data)
        b1, b2 = phi(data, S, W)
        lhs = np.sum(cert.delta * b1) + np.sum(cert.epsilon * b2)
        rhs = np.sum(cert.M * S) + np.sum(cert.Xi * W)
        assert lhs == pytest.approx(rhs, abs=1e-8 * max(1.0, abs(lhs)))


def test_certificates_field_formulas():
    data = random_problem(13)
    rng = np.random.default_rng(1)
    W0, A = rng.standard_normal((2, 2)), rng.standard_normal((6, 6))
    c = dual_certificates(data, W0, A, alpha=0.3)
    np.testing.assert_allclose(c.delta, data.X_next - data.X_prev @ W0)
    np.testing.assert_allclose(c.epsilon, data.F_T @ W0 - data.fmap.apply(A))
    np.testing.assert_allclose(c.M, data.fmap.adjoint(c.epsilon))
    np.testing.assert_allclose(c.Xi, data.X_prev.T @ c.delta - data.F_T.T @ c.epsilon)
    assert c.tau0 == pytest.approx(2 * 0.3 * np.linalg.norm(c.M, 2) / 2)
    assert c.gamma0 == pytest.approx(2 * 0.7 * np.abs(c.M).max() / 2)
    assert c.kappa0 == pytest.approx(2 * np.abs(c.Xi).max())
    # operator norm dominates the largest entry
    assert np.linalg.norm(c.M, 2) >= np.abs(c.M).max()


def test_certificates_zero_on_noiseless_data():
    inst = generate(GeneratorParams(n=12, T=5, r=3, sigma=0.0, seed=4))
    fmap = inst.oracle_feature_map()
    data = make_problem(inst.observed, fmap)
    c = dual_certificates(data, inst.W0, inst.target)
    for arr in (c.delta, c.epsilon, c.M, c.Xi):
        np.testing.assert_allclose(arr, 0, atol=1e-12)
    assert c.tau0 == pytest.approx(0, abs=1e-12) and c.kappa0 == pytest.approx(0, abs=1e-12)
