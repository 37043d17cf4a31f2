import numpy as np
import pytest
import scipy.sparse as sp

from oaflow.errors import ConfigError, InvalidDimensionError
from oaflow.flow import (
    FlowConfig,
    NeighborhoodGraph,
    _lifted_step,
    flow_step,
    generalized_likelihood,
    grid_ascans,
    integrate,
    likelihood,
    round_labels,
    similarity,
    similarity_composition,
)
from oaflow.ordering import order_residuals, penalty_phi_grad
from oaflow.simplex import barycenter, exp_lifted
from conftest import random_simplex

DIMS = (6, 3, 2)


def small_problem(rng, dims=DIMS, c=4):
    n = int(np.prod(dims))
    return rng.uniform(0, 2, size=(n, c)), NeighborhoodGraph.grid(dims, (3, 3, 3)), grid_ascans(dims)


def adversarial_distances(dims=(12, 4, 4), c=3):
    """Layered distances with a band inside the deepest layer favouring label 0."""
    N, NA, NB = dims
    truth = np.repeat(np.arange(c), N // c)
    D = np.ones((N, c))
    D[np.arange(N), truth] = 0
    D[8:10] = [0, 1, 1]
    return np.tile(D, (NA * NB, 1))


def test_graph_grid_properties():
    g = NeighborhoodGraph.grid((7, 4, 3), (5, 5, 3))
    W = g.weights
    assert np.allclose(W.sum(axis=1), 1)
    assert ((W != 0) != (W != 0).T).nnz == 0
    assert np.all(W.diagonal() > 0)
    # interior voxel sees a full 5x5x3 box with uniform weights
    i = 3 + 7 * (2 + 4 * 1)
    row = W.getrow(i)
    assert row.nnz == 5 * 4 * 3 and np.allclose(row.data, 1 / 60)


def test_graph_validation():
    with pytest.raises(ConfigError):
        NeighborhoodGraph(sp.csr_matrix(np.array([[0.5, 0.5], [0.0, 1.0]])))
    with pytest.raises(ConfigError):
        NeighborhoodGraph(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])))
    with pytest.raises(ConfigError):
        NeighborhoodGraph(sp.csr_matrix(np.array([[0.5, 0.6], [0.5, 0.5]])))
    with pytest.raises(ConfigError):
        NeighborhoodGraph.grid((4, 4, 4), (4, 3, 3))


def test_flow_config_validation():
    for bad in (dict(rho=0), dict(gamma=-1), dict(step=-0.1), dict(max_steps=0), dict(window=0),
                dict(entropy_threshold=0), dict(ordering_weight=-1)):
        with pytest.raises(ConfigError):
            FlowConfig(**bad)
    with pytest.raises(ConfigError):
        FlowConfig(entropy_threshold=1.0).threshold(2)
    assert np.isclose(FlowConfig().threshold(6), 1e-3 * np.log(6))


def test_likelihood_examples(rng):
    W = random_simplex(rng, (5, 3))
    assert np.allclose(likelihood(W, np.zeros((5, 3))), W)
    L = likelihood(barycenter(1, 2), np.array([[0.0, 2.5 * np.log(2)]]), rho=2.5)
    assert np.allclose(L, [[2 / 3, 1 / 3]], atol=1e-15)
    D = rng.normal(size=(5, 3))
    assert np.allclose(likelihood(W, D), likelihood(W, D + rng.normal(size=(5, 1))), atol=1e-14)


def test_similarity_examples(rng):
    g = NeighborhoodGraph.grid(DIMS, (3, 3, 3))
    n = g.n
    q = random_simplex(rng, (4,))
    base = random_simplex(rng, (n, 4))
    assert np.allclose(similarity(base, np.tile(q, (n, 1)), g), q, atol=1e-15)
    L = random_simplex(rng, (n, 4))
    assert np.allclose(similarity(base, L, NeighborhoodGraph.identity(n)), L, atol=1e-15)
    assert np.max(np.abs(similarity(base, L, g) - similarity_composition(base, L, g))) < 1e-12


def brute_generalized_likelihood(W, D, ascans, config):
    grad = np.zeros_like(W)
    Q = np.tril(np.ones((W.shape[1],) * 2))
    for a in ascans:
        for (i, j), y in order_residuals(a, W, config.window):
            pos = {int(v): k for k, v in enumerate(a)}
            upper, lower = (i, j) if pos[i] < pos[j] else (j, i)
            g = Q.T @ penalty_phi_grad(y, config.gamma)
            grad[upper] += g
            grad[lower] -= g
    return exp_lifted(W, -D / config.rho - config.ordering_weight * grad)


@pytest.mark.parametrize("weight", [1.0, 1e-3])
def test_generalized_likelihood_brute_force(rng, weight):
    W = random_simplex(rng, (6, 3))
    D = rng.uniform(0, 1, size=(6, 3))
    ascans = [np.array([4, 0, 2]), np.array([1, 5, 3])]
    cfg = FlowConfig(rho=0.7, gamma=0.3, ordering_weight=weight)
    assert np.allclose(generalized_likelihood(W, D, ascans, cfg),
                       brute_generalized_likelihood(W, D, ascans, cfg), atol=1e-13)


def test_generalized_likelihood_reductions(rng):
    W = random_simplex(rng, (6, 3))
    D = rng.uniform(0, 1, size=(6, 3))
    cfg = FlowConfig(rho=0.5)
    plain = likelihood(W, D, 0.5)
    assert np.array_equal(generalized_likelihood(W, D, [range(3), range(3, 6)], cfg, ordered=False), plain)
    singles = [[i] for i in range(6)]
    assert np.allclose(generalized_likelihood(W, D, singles, cfg), plain, atol=1e-15)
    with pytest.raises(ConfigError):
        generalized_likelihood(W, D, [range(4), range(3, 6)], cfg)


def test_flow_step_examples(rng):
    D, g, asc = small_problem(rng)
    n = g.n
    W = random_simplex(rng, (n, 4))
    assert np.array_equal(flow_step(W, D, g, asc, FlowConfig(step=0)), W)
    U = barycenter(n, 4)
    assert np.allclose(flow_step(U, np.zeros((n, 4)), g, asc, FlowConfig(), ordered=False), U, atol=1e-15)


def test_flow_step_moves_toward_favoured_label():
    n = 10
    D = np.tile([1.0, 0.0, 1.0], (n, 1))
    g, asc = NeighborhoodGraph.identity(n), [[i] for i in range(n)]
    W, peak = barycenter(n, 3), []
    for _ in range(30):
        W = flow_step(W, D, g, asc, FlowConfig(), ordered=False)
        peak.append(W[:, 1].min())
    assert np.all(np.diff(peak) > 0) and peak[-1] > 0.9


@pytest.mark.parametrize("ordered", [False, True])
def test_row_sums_preserved_before_clamping(rng, ordered):
    D, g, asc = small_problem(rng)
    W = barycenter(g.n, 4)
    cfg = FlowConfig()
    worst = 0.0
    for _ in range(1000):
        W_next, _ = _lifted_step(W, D, g, asc, cfg, ordered)
        worst = max(worst, np.max(np.abs(W_next.sum(axis=1) - 1)))
        W = flow_step(W, D, g, asc, cfg, ordered)
    assert worst < 1e-9


@pytest.mark.parametrize("ordered", [False, True])
def test_row_shift_invariance_bitwise(rng, ordered):
    dims = (6, 3, 2)
    n = int(np.prod(dims))
    D = np.round(rng.uniform(0, 2, size=(n, 4)) * 2**20) / 2**20
    shifted = D + 16.0 * rng.integers(0, 5, size=(n, 1))
    g, asc = NeighborhoodGraph.grid(dims, (3, 3, 3)), grid_ascans(dims)
    cfg = FlowConfig(max_steps=200)
    W1, t1 = integrate(D, g, asc, cfg, ordered)
    W2, t2 = integrate(shifted, g, asc, cfg, ordered)
    assert np.array_equal(W1, W2)
    assert [r.mean_entropy for r in t1.records] == [r.mean_entropy for r in t2.records]
    # arbitrary real shifts agree to round-off
    W3, _ = integrate(D + rng.normal(size=(n, 1)), g, asc, cfg, ordered)
    assert np.max(np.abs(W3 - W1)) < 1e-9


def test_single_voxel_converges():
    W, trace = integrate(np.array([[0.0, 10.0]]), NeighborhoodGraph.identity(1), [[0]], FlowConfig())
    assert trace.converged
    assert W[0, 0] > 1 - 1e-3
    steps = [r.step for r in trace.records]
    assert steps == list(range(1, len(steps) + 1))


def test_integrate_not_converged_flag(rng):
    D, g, asc = small_problem(rng)
    W, trace = integrate(D, g, asc, FlowConfig(max_steps=3))
    assert not trace.converged and trace.steps == 3
    assert trace.runtime >= 0


def test_integrate_input_validation(rng):
    D, g, asc = small_problem(rng)
    with pytest.raises(InvalidDimensionError):
        integrate(D[:-1], g, asc)
    bad = D.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ConfigError):
        integrate(bad, g, asc)
    with pytest.raises(ConfigError):
        integrate(D, g, asc[:-1])


def test_ordered_flow_repairs_inverted_band():
    dims = (12, 4, 4)
    D = adversarial_distances(dims)
    g, asc = NeighborhoodGraph.grid(dims, (3, 3, 3)), grid_ascans(dims)
    plain, _ = integrate(D, g, asc, FlowConfig(), ordered=False)
    ordered, trace = integrate(D, g, asc, FlowConfig(), ordered=True)
    v = lambda W: int(np.sum(np.diff(round_labels(W).reshape(-1, dims[0]), axis=1) < 0))
    assert v(plain) > 0
    assert v(ordered) == 0 and trace.converged
    assert np.all(np.isfinite([r.ordering_energy for r in trace.records]))


def test_integrate_deterministic(rng):
    D, g, asc = small_problem(rng)
    W1, t1 = integrate(D, g, asc, FlowConfig(max_steps=50))
    W2, t2 = integrate(D, g, asc, FlowConfig(max_steps=50))
    assert np.array_equal(W1, W2)
    strip = lambda t: [(r.step, r.mean_entropy, r.ordering_energy) for r in t.records]
    assert strip(t1) == strip(t2)


def test_round_labels():
    assert list(round_labels(np.eye(3))) == [0, 1, 2]
    assert round_labels(np.array([[0.5, 0.5]]))[0] == 0
    W = np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3]])
    assert np.array_equal(round_labels(W), round_labels(W ** 3 * 7))
