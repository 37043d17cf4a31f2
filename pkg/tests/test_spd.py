import numpy as np
import pytest
from hypothesis import given, strategies as st

from oaflow.errors import ConfigError, ConvergenceError, DomainError, InvalidDimensionError
from oaflow.spd import (
    MeanConfig,
    exp_map_spd,
    generalized_eigenvalues,
    is_spd,
    karcher_residual,
    log_euclidean_mean,
    log_map_spd,
    logdet,
    matrix_exp,
    matrix_log,
    matrix_sqrt,
    random_spd,
    riemannian_distance,
    riemannian_mean,
    stein_divergence,
    stein_divergence_matrix,
    stein_mean,
    sym_eig,
    wishart_samples,
)

seeds = st.integers(0, 2**31)


def test_sym_eig_examples(rng):
    lam, V = sym_eig(np.diag([9.0, 1.0, 4.0]))
    assert np.allclose(lam, [1, 4, 9])
    assert np.allclose(np.abs(V), np.eye(3)[:, [1, 2, 0]])
    for _ in range(200):
        A = rng.normal(size=(10, 10))
        S = A + A.T
        lam, V = sym_eig(S)
        assert np.all(np.diff(lam) >= 0)
        assert np.linalg.norm((V * lam) @ V.T - S) < 1e-9 * np.linalg.norm(S)
    with pytest.raises(DomainError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_matrix_functions(rng):
    assert np.allclose(matrix_log(np.eye(4)), 0)
    assert np.allclose(matrix_exp(np.diag([0.0, np.log(4)])), np.diag([1.0, 4.0]))
    S = random_spd(8, rng, cond=1e3)
    assert np.linalg.norm(matrix_exp(matrix_log(S)) - S) < 1e-8 * np.linalg.norm(S)
    R = matrix_sqrt(S)
    assert np.allclose(R @ R, S)
    with pytest.raises(DomainError):
        matrix_log(np.diag([1.0, -1.0]))


def test_distance_examples(rng):
    S = random_spd(4, rng)
    assert riemannian_distance(S, S) < 1e-12
    assert np.isclose(riemannian_distance(np.eye(3), np.exp(2) * np.eye(3)), 2 * np.sqrt(3), atol=1e-12)
    for _ in range(100):
        S, T = random_spd(5, rng, 50), random_spd(5, rng, 50)
        assert abs(riemannian_distance(S, T) - riemannian_distance(T, S)) < 1e-10
    with pytest.raises(InvalidDimensionError):
        riemannian_distance(np.eye(2), np.eye(3))


def test_generalized_eigenvalues_match_dense(rng):
    S, T = random_spd(6, rng), random_spd(6, rng)
    ref = np.sort(np.linalg.eigvals(np.linalg.solve(S, T)).real)
    assert np.allclose(generalized_eigenvalues(S, T), ref)


@given(seeds, st.floats(0.01, 100))
def test_distance_invariances(seed, alpha):
    rng = np.random.default_rng(seed)
    S, T = random_spd(8, rng, 100), random_spd(8, rng, 100)
    A = rng.normal(size=(8, 8)) + 3 * np.eye(8)
    d = riemannian_distance(S, T)
    assert abs(riemannian_distance(A.T @ S @ A, A.T @ T @ A) - d) < 1e-8
    assert abs(riemannian_distance(alpha * S, alpha * T) - d) < 1e-10


def test_exp_log_map(rng):
    S = random_spd(5, rng)
    assert np.allclose(exp_map_spd(S, np.zeros((5, 5))), S)
    U = rng.normal(size=(5, 5))
    U = U + U.T
    assert np.allclose(exp_map_spd(np.eye(5), U), matrix_exp(U))
    for _ in range(20):
        S, T = random_spd(5, rng, 20), random_spd(5, rng, 20)
        assert np.linalg.norm(exp_map_spd(S, log_map_spd(S, T)) - T) < 1e-8
        assert np.isclose(riemannian_distance(S, T),
                          np.linalg.norm(matrix_log(np.linalg.inv(matrix_sqrt(S)) @ T
                                                    @ np.linalg.inv(matrix_sqrt(S)))))


def test_stein_examples(rng):
    assert stein_divergence(np.eye(3), np.eye(3)) == 0.0
    assert np.isclose(stein_divergence([[1.0]], [[9.0]]), np.log(5 / 3), atol=1e-14)
    assert abs(np.log(5 / 3) - 0.510826) < 1e-6
    for _ in range(1000):
        S, T = random_spd(4, rng), random_spd(4, rng)
        a, b = stein_divergence(S, T), stein_divergence(T, S)
        assert a > 0 and abs(a - b) < 1e-12


def test_stein_matrix_matches_pairwise(rng):
    X = np.stack([random_spd(4, rng) for _ in range(7)])
    P = np.stack([random_spd(4, rng) for _ in range(3)])
    M = stein_divergence_matrix(X, P)
    ref = [[stein_divergence(x, p) for p in P] for x in X]
    assert np.allclose(M, ref, atol=1e-12)
    assert np.allclose(logdet(X), np.linalg.slogdet(X)[1])


def test_mean_config_validation():
    for bad in (dict(tolerance=0), dict(max_iters=0), dict(stein_step=0), dict(stein_step=4.5)):
        with pytest.raises(ConfigError):
            MeanConfig(**bad)


def test_log_euclidean_examples(rng):
    S = random_spd(3, rng)
    assert np.allclose(log_euclidean_mean([S]), S)
    assert np.allclose(log_euclidean_mean([np.eye(3), np.exp(2) * np.eye(3)]), np.e * np.eye(3))
    with pytest.raises(InvalidDimensionError):
        log_euclidean_mean(np.empty((0, 3, 3)))


def test_riemannian_mean_examples(rng):
    S = random_spd(4, rng)
    assert np.allclose(riemannian_mean([S, S, S]), S)
    assert np.allclose(riemannian_mean([np.eye(2), np.diag([4.0, 9.0])]), np.diag([2.0, 3.0]), atol=1e-10)


@pytest.mark.parametrize("d,N", [(2, 3), (5, 10), (10, 20)])
def test_riemannian_mean_residual(rng, d, N):
    for _ in range(5):
        mats = np.stack([random_spd(d, rng, 30) for _ in range(N)])
        w = rng.dirichlet(np.ones(N))
        M = riemannian_mean(mats, w)
        assert is_spd(M)
        assert karcher_residual(M, mats, w) <= 1e-8


def test_riemannian_mean_accumulated_rule(rng):
    mats = np.stack([random_spd(3, rng, 5) for _ in range(4)])
    cfg = MeanConfig(max_iters=5000)
    a = riemannian_mean(mats, config=cfg, step_rule="accumulated")
    b = riemannian_mean(mats, config=cfg)
    assert np.linalg.norm(a - b) < 1e-7
    with pytest.raises(ConfigError):
        riemannian_mean(mats, step_rule="bogus")


def test_riemannian_mean_convergence_error(rng):
    mats = np.stack([random_spd(6, rng, 1e4) for _ in range(10)])
    with pytest.raises(ConvergenceError) as info:
        riemannian_mean(mats, config=MeanConfig(max_iters=1, tolerance=1e-14))
    assert info.value.residual > 1e-14
    assert "last residual" in str(info.value)


def test_commuting_means_agree(rng):
    Q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    for _ in range(10):
        mats = np.stack([(Q * np.exp(rng.normal(size=5))) @ Q.T for _ in range(6)])
        w = rng.dirichlet(np.ones(6))
        le = log_euclidean_mean(mats, w)
        assert np.linalg.norm(riemannian_mean(mats, w) - le) < 1e-7
        # the Stein mean of commuting matrices is not the geometric mean in general,
        # only for two samples; check that case
        two = stein_mean(mats[:2])
        assert np.linalg.norm(two - log_euclidean_mean(mats[:2])) < 1e-7


def test_stein_mean_examples(rng):
    S = random_spd(4, rng)
    assert np.allclose(stein_mean([S, S]), S)
    assert abs(stein_mean([[[1.0]], [[9.0]]])[0, 0] - 3.0) < 1e-8
    fast = stein_mean([[[1.0]], [[9.0]]], config=MeanConfig(stein_step=4.0))
    assert abs(fast[0, 0] - 3.0) < 1e-8


def test_stein_mean_is_stationary(rng):
    mats = np.stack([random_spd(4, rng, 20) for _ in range(8)])
    w = rng.dirichlet(np.ones(8))
    M = stein_mean(mats, w)
    grad = np.linalg.inv(M) - sum(wi * np.linalg.inv(0.5 * (M + Si)) for wi, Si in zip(w, mats))
    assert np.linalg.norm(M @ grad @ M) < 1e-7


def test_stein_mean_convergence_error(rng):
    mats = np.stack([random_spd(4, rng, 1e3) for _ in range(5)])
    with pytest.raises(ConvergenceError):
        stein_mean(mats, config=MeanConfig(max_iters=1, tolerance=1e-14))


def test_wishart_samples_mean(rng):
    scale = random_spd(3, rng)
    X = wishart_samples(4000, scale, 5, rng)
    assert X.shape == (4000, 3, 3)
    assert all(is_spd(x) for x in X[:50])
    assert np.linalg.norm(X.mean(axis=0) - scale) < 0.1 * np.linalg.norm(scale)
