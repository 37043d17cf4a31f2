"""Geometry of the cone of symmetric positive definite matrices.

Affine-invariant Riemannian distance and exponential map, plus three ways of
averaging a weighted sample of SPD matrices:

* :func:`riemannian_mean` -- Karcher mean by a damped fixed-point iteration
  in Cholesky coordinates with adaptive step size,
* :func:`log_euclidean_mean` -- closed form ``expm(sum w_i logm S_i)``,
* :func:`stein_mean` -- minimiser of the weighted Stein divergence, computed
  by geometric Euler steps on its Riemannian gradient flow.

Matrix functions go through a symmetric eigendecomposition, never through
iterative square-root or Pade schemes, so results are deterministic.
Stacks of matrices (leading batch axes) are accepted wherever that is cheap.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, ConvergenceError, DomainError, InvalidDimensionError

_SYM_RTOL = 1e-10


def _check_square(S, name="S"):
    S = np.asarray(S, dtype=float)
    if S.ndim < 2 or S.shape[-1] != S.shape[-2]:
        raise InvalidDimensionError(f"{name} must be square, got shape {S.shape}")
    return S


def _check_symmetric(S, name="S"):
    S = _check_square(S, name)
    asym = np.linalg.norm(S - np.swapaxes(S, -1, -2), axis=(-2, -1))
    scale = np.linalg.norm(S, axis=(-2, -1))
    if np.any(asym > _SYM_RTOL * np.maximum(scale, np.finfo(float).tiny)):
        raise DomainError(f"{name} is not symmetric")
    return S


def sym(S):
    """Symmetric part ``(S + S^T) / 2``."""
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def sym_eig(S):
    """Eigendecomposition of a symmetric matrix.

    Returns
    -------
    eigenvalues : ndarray, shape (..., d)
        Ascending.
    eigenvectors : ndarray, shape (..., d, d)
        Orthogonal; column ``k`` belongs to ``eigenvalues[..., k]``.

    Raises
    ------
    DomainError
        If ``S`` is not symmetric to within ``1e-10`` relative Frobenius norm.
    """
    S = _check_symmetric(S)
    return np.linalg.eigh(sym(S))


def _spectral(S, fn):
    w, V = np.linalg.eigh(sym(S))
    return (V * fn(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def matrix_exp(S):
    """Matrix exponential of a symmetric matrix (SPD result)."""
    return _spectral(_check_symmetric(S), np.exp)


def matrix_log(S):
    """Principal matrix logarithm of an SPD matrix."""
    w, V = sym_eig(S)
    if np.any(w <= 0):
        raise DomainError("matrix_log requires a positive definite matrix")
    return (V * np.log(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def matrix_sqrt(S):
    """Symmetric square root of an SPD matrix."""
    w, V = sym_eig(S)
    if np.any(w <= 0):
        raise DomainError("matrix_sqrt requires a positive definite matrix")
    return (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def matrix_power(S, p):
    """``S**p`` for SPD ``S`` via the eigenvalues."""
    w, V = sym_eig(S)
    if np.any(w <= 0):
        raise DomainError("matrix_power requires a positive definite matrix")
    return (V * (w ** p)[..., None, :]) @ np.swapaxes(V, -1, -2)


def is_spd(S, tol=0.0):
    """True if ``S`` is symmetric and its smallest eigenvalue exceeds ``tol``."""
    try:
        w, _ = sym_eig(S)
    except (DomainError, InvalidDimensionError):
        return False
    return bool(np.all(w > tol))


def _cholesky(S, name="S"):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"{name} is not positive definite") from exc


def _same_dim(S, T):
    if S.shape[-1] != T.shape[-1]:
        raise InvalidDimensionError(f"dimension mismatch: {S.shape[-1]} != {T.shape[-1]}")


def generalized_eigenvalues(S, T):
    """Eigenvalues of the pencil ``(T, S)``, i.e. of ``S^{-1} T``.

    ``S = L L^T`` is factored and ``L^{-1} T L^{-T}`` is diagonalised, which
    keeps the problem symmetric.
    """
    S = _check_symmetric(S, "S")
    T = _check_symmetric(T, "T")
    _same_dim(S, T)
    L = _cholesky(S)
    X = solve_triangular(L, T, lower=True)
    M = solve_triangular(L, X.T, lower=True)
    return np.linalg.eigvalsh(sym(M))


def riemannian_distance(S, T):
    """Affine-invariant distance ``sqrt(sum_i log^2 lambda_i(S, T))``."""
    lam = generalized_eigenvalues(S, T)
    if np.any(lam <= 0):
        raise DomainError("T is not positive definite")
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def exp_map_spd(S, U):
    """Riemannian exponential ``S^{1/2} expm(S^{-1/2} U S^{-1/2}) S^{1/2}``."""
    S = _check_symmetric(S, "S")
    U = _check_symmetric(U, "U")
    _same_dim(S, U)
    w, V = sym_eig(S)
    if np.any(w <= 0):
        raise DomainError("base point is not positive definite")
    h = (V * np.sqrt(w)) @ V.T
    hi = (V / np.sqrt(w)) @ V.T
    return sym(h @ _spectral(hi @ U @ hi, np.exp) @ h)


def log_map_spd(S, T):
    """Riemannian logarithm ``S^{1/2} logm(S^{-1/2} T S^{-1/2}) S^{1/2}``."""
    S = _check_symmetric(S, "S")
    T = _check_symmetric(T, "T")
    _same_dim(S, T)
    w, V = sym_eig(S)
    if np.any(w <= 0):
        raise DomainError("base point is not positive definite")
    h = (V * np.sqrt(w)) @ V.T
    hi = (V / np.sqrt(w)) @ V.T
    return sym(h @ matrix_log(sym(hi @ T @ hi)) @ h)


def logdet(S):
    """Log-determinant of SPD matrices via Cholesky (batched)."""
    L = _cholesky(np.asarray(S, dtype=float))
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def stein_divergence(S1, S2):
    """Stein (Jensen-Bregman log-det) divergence.

    ``logdet((S1 + S2) / 2) - (logdet S1 + logdet S2) / 2``, broadcast over
    leading axes. Log-determinants come from Cholesky factors. Round-off below
    zero is clipped, so the result is always ``>= 0``.
    """
    S1 = _check_square(S1, "S1")
    S2 = _check_square(S2, "S2")
    _same_dim(S1, S2)
    d = logdet(0.5 * (S1 + S2)) - 0.5 * (logdet(S1) + logdet(S2))
    d = np.maximum(d, 0.0)
    return float(d) if np.ndim(d) == 0 else d


def stein_divergence_matrix(X, P, logdet_X=None):
    """All divergences between descriptors ``X`` (n, d, d) and prototypes ``P`` (m, d, d).

    Returns an ``(n, m)`` array. ``logdet_X`` may be passed to avoid
    refactoring the descriptors when the same ``X`` is scored repeatedly.
    """
    X = _check_square(X, "X")
    P = _check_square(np.asarray(P, dtype=float).reshape(-1, *np.shape(P)[-2:]), "P")
    _same_dim(X, P)
    if logdet_X is None:
        logdet_X = logdet(X)
    logdet_P = logdet(P)
    out = np.empty((X.shape[0], P.shape[0]))
    for k in range(P.shape[0]):
        out[:, k] = logdet(0.5 * (X + P[k])) - 0.5 * (logdet_X + logdet_P[k])
    return np.maximum(out, 0.0)


@dataclass(frozen=True)
class MeanConfig:
    """Termination and step parameters shared by the iterative means.

    Attributes
    ----------
    tolerance : float
        Stop once the optimality residual drops to this value.
    max_iters : int
        Iteration cap; exceeding it raises :class:`ConvergenceError`.
    stein_step : float
        Initial Euler step ``h`` of :func:`stein_mean`, in ``(0, 4]``. Near
        the optimum the iteration contracts roughly by ``1 - h/4`` per step,
        so ``h = 4`` behaves like a Newton step; halving keeps any choice safe.
    """

    tolerance: float = 1e-8
    max_iters: int = 200
    stein_step: float = 0.5

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if int(self.max_iters) < 1:
            raise ConfigError("max_iters must be >= 1")
        if not 0 < self.stein_step <= 4:
            raise ConfigError("stein_step must lie in (0, 4]")


def _samples(mats, weights):
    mats = _check_square(mats, "samples")
    if mats.ndim == 2:
        mats = mats[None]
    if mats.ndim != 3 or mats.shape[0] == 0:
        raise InvalidDimensionError("need a nonempty stack of matrices with shape (N, d, d)")
    n = mats.shape[0]
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape[0] != n:
            raise InvalidDimensionError(f"{w.shape[0]} weights for {n} samples")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"weights must sum to one (sum = {w.sum():.12g})")
    return mats, w


def log_euclidean_mean(mats, weights=None):
    """Weighted Log-Euclidean mean ``expm(sum_i w_i logm(S_i))``.

    Parameters
    ----------
    mats : array_like, shape (N, d, d)
        SPD samples.
    weights : array_like, shape (N,), optional
        Nonnegative weights summing to one; uniform if omitted.
    """
    mats, w = _samples(mats, weights)
    logs = matrix_log(mats)
    return _spectral(np.tensordot(w, logs, axes=1), np.exp)


def _log_ratio(L, inv_mats):
    # logm(L^T S_i^{-1} L) for every sample, via batched eigh
    M = np.swapaxes(L, -1, -2)[None] @ inv_mats @ L[None]
    w, V = np.linalg.eigh(sym(M))
    if np.any(w <= 0):
        raise DomainError("iterate left the positive definite cone")
    return (V * np.log(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def karcher_residual(S, mats, weights=None):
    """Frobenius norm of ``sum_i w_i logm(S^{1/2} S_i^{-1} S^{1/2})``.

    Zero exactly at the weighted Riemannian (Karcher) mean.
    """
    mats, w = _samples(mats, weights)
    h = matrix_sqrt(S)
    inv = np.linalg.inv(mats)
    return float(np.linalg.norm(np.tensordot(w, _log_ratio(h, inv), axes=1)))


def _cond_factor(c):
    # log(c) / (c - 1), continuous at c = 1
    x = c - 1.0
    return 1.0 if x < 1e-12 else float(np.log1p(x) / x)


def riemannian_mean(mats, weights=None, config=None, step_rule="single"):
    """Weighted Riemannian (Karcher) mean of SPD matrices.

    Starting from the Log-Euclidean mean, iterate

        S <- S - tau_t * L (sum_i w_i logm(L^T S_i^{-1} L)) L^T,   S = L L^T,

    which is a damped fixed-point step towards the root of the optimality
    condition. The damping is ``tau_t = 2 / (alpha_t + beta_t)`` with
    ``alpha_t = g(c_t)``, ``beta_t = c_t g(c_t)``, ``g(c) = log(c) / (c - 1)``
    and ``c_t`` the condition number of the current iterate.

    Parameters
    ----------
    mats : array_like, shape (N, d, d)
    weights : array_like, shape (N,), optional
    config : MeanConfig, optional
    step_rule : {"single", "accumulated"}
        ``"accumulated"`` sums ``g(c_k)`` over all past iterations into
        ``alpha_t``, which shrinks the step monotonically and converges much
        more slowly; ``"single"`` uses the current condition number only.

    Returns
    -------
    ndarray, shape (d, d)

    Raises
    ------
    ConvergenceError
        If the residual (see :func:`karcher_residual`) is still above
        ``config.tolerance`` after ``config.max_iters`` steps.

    Notes
    -----
    If an iterate has condition number exactly one the iteration stops and
    returns it, as the step size rule degenerates there.
    """
    if step_rule not in ("single", "accumulated"):
        raise ConfigError(f"unknown step_rule {step_rule!r}")
    config = config or MeanConfig()
    mats, w = _samples(mats, weights)
    inv = np.linalg.inv(mats)
    S = log_euclidean_mean(mats, w)
    alpha_acc = 0.0
    residual = np.inf
    for _ in range(config.max_iters + 1):
        L = _cholesky(S, "iterate")
        G = np.tensordot(w, _log_ratio(L, inv), axes=1)
        residual = float(np.linalg.norm(G))
        if residual <= config.tolerance:
            return S
        lam = np.linalg.eigvalsh(S)
        c = lam[-1] / lam[0]
        if c - 1.0 <= 1e-15:
            return S
        g = _cond_factor(c)
        alpha_acc += g
        alpha = alpha_acc if step_rule == "accumulated" else g
        tau = 2.0 / (alpha + c * g)
        S = sym(S - tau * (L @ G @ L.T))
    raise ConvergenceError("riemannian_mean did not converge", residual, iterate=S)


def _stein_update_direction(S, mats, w):
    h = matrix_sqrt(S)
    try:
        inv = np.linalg.inv(0.5 * (S[None] + mats))
    except np.linalg.LinAlgError as exc:
        raise DomainError("midpoint matrix is singular") from exc
    R = np.tensordot(w, inv, axes=1)
    U = sym(np.eye(S.shape[0]) - h @ R @ h)
    return h, U, float(np.linalg.norm(U))


def stein_mean(mats, weights=None, config=None):
    """Weighted mean under the Stein divergence.

    Geometric explicit Euler on the Riemannian gradient flow of
    ``sum_i w_i D_S(S, S_i)``:

        U = I - S^{1/2} (sum_i w_i ((S + S_i)/2)^{-1}) S^{1/2}
        S <- S^{1/2} expm(h/2 U) S^{1/2}

    started at the Log-Euclidean mean and stopped when ``||U||_F`` reaches
    ``config.tolerance``. A step that would increase ``||U||_F`` is rejected
    and retried with ``h`` halved; after an accepted step ``h`` doubles again,
    up to ``config.stein_step``.
    """
    config = config or MeanConfig()
    mats, w = _samples(mats, weights)
    S = log_euclidean_mean(mats, w)
    h_step = config.stein_step
    half, U, unorm = _stein_update_direction(S, mats, w)
    for _ in range(config.max_iters):
        if unorm <= config.tolerance:
            return S
        cand = sym(half @ _spectral(0.5 * h_step * U, np.exp) @ half)
        c_half, c_U, c_norm = _stein_update_direction(cand, mats, w)
        if c_norm > unorm and h_step > 1e-6:
            h_step *= 0.5
            continue
        S, half, U, unorm = cand, c_half, c_U, c_norm
        h_step = min(2.0 * h_step, config.stein_step)
    if unorm <= config.tolerance:
        return S
    raise ConvergenceError("stein_mean did not converge", unorm, iterate=S)


def random_spd(d, rng, cond=10.0):
    """Random SPD matrix with log-uniform spectrum in ``[1, cond]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = np.exp(rng.uniform(0.0, np.log(cond), size=d))
    return sym((Q * lam) @ Q.T)


def wishart_samples(n, scale, dof, rng):
    """``n`` draws ``X X^T / dof`` with ``X`` columns ~ N(0, scale)."""
    scale = np.asarray(scale, dtype=float)
    C = np.linalg.cholesky(scale)
    X = C @ rng.standard_normal((n, scale.shape[0], dof))
    return sym(X @ np.swapaxes(X, -1, -2) / dof)
