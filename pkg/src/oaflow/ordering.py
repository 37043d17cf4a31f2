"""Layer ordering along A-scans.

Labels are indexed so that ascending label means deeper tissue. With the
lower-triangular all-ones matrix ``Q``, ``Q w`` is the cumulative label mass
of an assignment vector, and a pair ``(w_i, w_j)`` with ``w_i`` above
``w_j`` is *ordered* when ``Q (w_i - w_j) >= 0``: at every label level the
shallower voxel has accumulated at least as much mass as the deeper one.

The ordering energy of one A-scan sums a smooth barrier ``phi`` over the
residuals of all voxel pairs. Both orientations ``(i, j)`` and ``(j, i)`` are
summed, so each geometric pair enters twice.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError, InvalidDimensionError

#: Exponents of the barrier are clipped here; beyond it the penalty saturates.
EXP_CLIP = 700.0


@dataclass(frozen=True)
class OrderingOperator:
    """Bidiagonal difference matrix ``B`` and its negated inverse ``Q``."""

    c: int

    def __post_init__(self):
        if self.c < 2:
            raise InvalidDimensionError("need at least 2 labels")

    @property
    def B(self):
        return -np.eye(self.c, dtype=np.int64) + np.eye(self.c, k=-1, dtype=np.int64)

    @property
    def Q(self):
        return np.tril(np.ones((self.c, self.c), dtype=np.int64))


@dataclass(frozen=True)
class OrderingPenaltyConfig:
    """Barrier smoothing ``gamma`` and pair window (``None`` = all pairs)."""

    gamma: float = 0.1
    window: Optional[int] = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.window is not None and int(self.window) < 1:
            raise ConfigError("window must be a positive integer or None")


def cumulative_mass(w):
    """``Q w`` along the last axis."""
    return np.cumsum(w, axis=-1)


def _adjoint_cumulative(g):
    # Q^T g: reverse cumulative sum along the last axis
    return np.cumsum(g[..., ::-1], axis=-1)[..., ::-1]


def is_ordered(w_i, w_j, tol=1e-12):
    """True if ``w_i`` (shallower) and ``w_j`` (deeper) form an ordered pair."""
    w_i = np.asarray(w_i, dtype=float)
    w_j = np.asarray(w_j, dtype=float)
    if w_i.shape != w_j.shape:
        raise InvalidDimensionError(f"shape mismatch {w_i.shape} != {w_j.shape}")
    return bool(np.all(cumulative_mass(w_i - w_j) >= -tol))


def _window(window, N):
    return N - 1 if window is None else min(int(window), N - 1)


def order_residuals(ascan, W, window=None):
    """Residual vectors of every voxel pair of one A-scan.

    Parameters
    ----------
    ascan : array_like of int
        Row indices of ``W``, shallowest first.
    W : ndarray, shape (n, c)
    window : int, optional
        Only pairs with depth offset ``<= window``; all pairs if ``None``.

    Returns
    -------
    list of ((int, int), ndarray)
        ``((i, j), y)`` for both orientations of each pair, ``i``/``j`` being
        row indices of ``W``. ``y = Q(w_upper - w_lower)``, so the A-scan is
        ordered exactly when all residual entries are nonnegative.
    """
    ascan = np.asarray(ascan, dtype=np.int64)
    W = np.asarray(W, dtype=float)
    N = ascan.size
    out = []
    win = _window(window, N)
    for a in range(N):
        for b in range(N):
            if a == b or abs(a - b) > win:
                continue
            upper, lower = (a, b) if a < b else (b, a)
            y = cumulative_mass(W[ascan[upper]] - W[ascan[lower]])
            out.append(((int(ascan[a]), int(ascan[b])), y))
    return out


def penalty_phi(y, gamma):
    """Smooth barrier ``gamma * sum(exp(-y / gamma))`` over the last axis."""
    y = np.asarray(y, dtype=float)
    z = np.minimum(-y / gamma, EXP_CLIP)
    return gamma * np.sum(np.exp(z), axis=-1)


def penalty_phi_grad(y, gamma):
    """Gradient ``-exp(-y / gamma)`` of :func:`penalty_phi` (entrywise)."""
    y = np.asarray(y, dtype=float)
    return -np.exp(np.minimum(-y / gamma, EXP_CLIP))


def ordering_energy(ascan, W, config=None):
    """Ordering energy of one A-scan: ``phi`` summed over all pair residuals."""
    config = config or OrderingPenaltyConfig()
    Wa = np.asarray(W, dtype=float)[np.asarray(ascan, dtype=np.int64)]
    return float(ascan_energy_and_gradient(Wa[None], config.gamma, config.window)[0][0])


def ordering_energy_gradient(ascan, W, config=None):
    """Euclidean gradient of :func:`ordering_energy` w.r.t. each A-scan row.

    Returns an array of shape ``(len(ascan), c)`` aligned with ``ascan``.
    """
    config = config or OrderingPenaltyConfig()
    Wa = np.asarray(W, dtype=float)[np.asarray(ascan, dtype=np.int64)]
    return ascan_energy_and_gradient(Wa[None], config.gamma, config.window)[1][0]


def ascan_energy_and_gradient(Wa, gamma, window=None, need_energy=True):
    """Energy and gradient for a batch of equal-length A-scans.

    Parameters
    ----------
    Wa : ndarray, shape (A, N, c)
        ``A`` A-scans of ``N`` voxels each, shallowest first.
    gamma : float
    window : int, optional

    Returns
    -------
    energy : ndarray, shape (A,)
        ``nan`` when ``need_energy`` is false.
    grad : ndarray, shape (A, N, c)

    Notes
    -----
    Pairs are visited by depth offset ``d = 1, 2, ...``; for each offset all
    A-scans and positions are handled in one vectorised pass. The gradient is
    first accumulated w.r.t. the cumulative masses ``P = Q w`` and mapped back
    with ``Q^T`` once at the end.
    """
    Wa = np.asarray(Wa, dtype=float)
    A, N, c = Wa.shape
    P = np.cumsum(Wa, axis=-1)
    gP = np.zeros_like(P)
    energy = np.zeros(A) if need_energy else np.full(A, np.nan)
    for d in range(1, _window(window, N) + 1):
        # residual of (upper i, lower i + d)
        z = np.minimum((P[:, d:] - P[:, :-d]) / gamma, EXP_CLIP)
        e = np.exp(z)
        if need_energy:
            energy += 2.0 * gamma * e.sum(axis=(1, 2))
        # d phi / d y = -e ; y = P_upper - P_lower ; factor 2 for both orientations
        gP[:, :-d] -= 2.0 * e
        gP[:, d:] += 2.0 * e
    return energy, _adjoint_cumulative(gP)


def construct_ordered_coupling(w_i, w_j, tol=1e-12):
    """Transport plan between an ordered pair that never moves mass upwards.

    Returns ``M >= 0`` with ``M 1 = w_i``, ``M^T 1 = w_j`` and ``M`` upper
    triangular (so ``<Q - I, M> = 0``). This is the monotone coupling: label
    ``k`` of ``w_i`` occupies the quantile interval ``[F_i(k-1), F_i(k)]`` of
    its cumulative mass, and ``M[k, l]`` is the overlap with the interval of
    label ``l`` of ``w_j``. Orderedness ``F_i >= F_j`` rules out any overlap
    with ``l < k``.

    Raises
    ------
    DomainError
        If the pair is not ordered.
    """
    w_i = np.asarray(w_i, dtype=float)
    w_j = np.asarray(w_j, dtype=float)
    if w_i.ndim != 1 or w_i.shape != w_j.shape:
        raise InvalidDimensionError("need two vectors of equal length")
    if not is_ordered(w_i, w_j, tol):
        raise DomainError("pair is not ordered; no upward-free coupling exists")
    Fi = np.concatenate([[0.0], np.cumsum(w_i)])
    Fj = np.concatenate([[0.0], np.cumsum(w_j)])
    hi = np.minimum(Fi[1:, None], Fj[None, 1:])
    lo = np.maximum(Fi[:-1, None], Fj[None, :-1])
    # entries below the diagonal can only be round-off within ``tol``
    return np.triu(np.maximum(hi - lo, 0.0))


def label_pair_ordered(l1, l2, c):
    """Ordering test for integral assignments ``e_l1`` (upper), ``e_l2`` (lower)."""
    e = np.eye(c)
    return is_ordered(e[l1], e[l2])
