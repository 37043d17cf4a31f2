"""Geometry of the relaxed assignment manifold.

Points are strictly positive probability vectors (or row-stochastic matrices,
one probability vector per row). Every function here acts on the last axis and
broadcasts over leading axes, so the same call handles a single vector or a
whole assignment matrix ``W`` of shape ``(n, c)``.

The exponential maps are the affine (e-connection) maps of information
geometry, not the Levi-Civita exponential of the Fisher-Rao metric.
"""
import numpy as np

from .errors import DomainError, InvalidDimensionError

#: Floor applied to assignment entries after each flow step.
EPS_INTERIOR = 1e-12


def _as_rows(x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] < 2:
        raise InvalidDimensionError(f"{name} needs at least 2 entries on the last axis, got shape {x.shape}")
    return x


def _check_pair(p, x):
    if p.shape[-1] != x.shape[-1]:
        raise InvalidDimensionError(f"label dimension mismatch: {p.shape[-1]} != {x.shape[-1]}")


def barycenter(n, c):
    """Return the ``(n, c)`` assignment matrix with every row equal to ``1/c``."""
    if c < 2:
        raise InvalidDimensionError("need at least 2 labels")
    return np.full((n, c), 1.0 / c)


def project_tangent(x):
    """Orthogonal projection onto the zero-sum tangent space, ``x - mean(x)``."""
    x = _as_rows(x)
    return x - x.mean(axis=-1, keepdims=True)


def replicator_map(p, x):
    """Apply ``R_p = Diag(p) - p p^T`` to ``x``.

    Parameters
    ----------
    p : array_like, shape (..., c)
        Interior probability vector(s).
    x : array_like, shape (..., c)
        Ambient vector(s).

    Returns
    -------
    ndarray, shape (..., c)
        Tangent vector(s) ``p * x - <p, x> p``; each sums to zero.
    """
    p = _as_rows(p, "p")
    x = _as_rows(x)
    _check_pair(p, x)
    return p * x - np.sum(p * x, axis=-1, keepdims=True) * p


def exp_affine(p, v):
    """Affine exponential map ``Exp_p(v) = p e^{v/p} / <p, e^{v/p}>``.

    The exponent is shifted by its row maximum before exponentiation; the
    normalisation cancels the shift, so large tangent vectors cannot overflow.
    Rows with ``v == 0`` return ``p`` unchanged.
    """
    p = _as_rows(p, "p")
    v = _as_rows(v, "v")
    _check_pair(p, v)
    z = v / p
    z = z - z.max(axis=-1, keepdims=True)
    q = p * np.exp(z)
    q /= q.sum(axis=-1, keepdims=True)
    zero = np.all(v == 0, axis=-1, keepdims=True)
    if np.any(zero):
        q = np.where(zero, np.broadcast_to(p, q.shape), q)
    return q


def exp_affine_inverse(p, q):
    """Inverse affine exponential map ``R_p log(q / p)``."""
    p = _as_rows(p, "p")
    q = _as_rows(q, "q")
    _check_pair(p, q)
    if np.any(q <= 0) or np.any(p <= 0):
        raise DomainError("exp_affine_inverse requires strictly positive arguments")
    return replicator_map(p, np.log(q) - np.log(p))


def exp_lifted(p, x):
    """Lifted exponential map ``exp_p = Exp_p o R_p``.

    Equals ``p e^{x} / <p, e^{x}>``, hence it ignores any constant added to
    ``x`` (row-wise).
    """
    p = _as_rows(p, "p")
    x = _as_rows(x)
    _check_pair(p, x)
    z = x - x.max(axis=-1, keepdims=True)
    q = p * np.exp(z)
    q /= q.sum(axis=-1, keepdims=True)
    return q


def exp_lifted_inverse(p, q):
    """Inverse of :func:`exp_lifted` restricted to the tangent space, ``Pi_0 log(q/p)``."""
    p = _as_rows(p, "p")
    q = _as_rows(q, "q")
    _check_pair(p, q)
    if np.any(q <= 0) or np.any(p <= 0):
        raise DomainError("exp_lifted_inverse requires strictly positive arguments")
    return project_tangent(np.log(q) - np.log(p))


def clamp_interior(W, eps=EPS_INTERIOR):
    """Floor entries at ``eps`` and renormalise the rows that were floored.

    Rows already inside the interior are returned unchanged, so clamping an
    interior state is the identity.
    """
    W = np.array(W, dtype=float)
    low = np.any(W < eps, axis=-1)
    if np.any(low):
        rows = np.maximum(W[low], eps)
        W[low] = rows / rows.sum(axis=-1, keepdims=True)
    return W


def mean_entropy(W):
    """Average Shannon entropy (nats) of the rows of ``W``.

    Zero entries contribute zero. ``np.sum`` uses pairwise summation in a
    fixed order, so the result does not depend on how ``W`` was produced.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(W > 0, -W * np.log(W), 0.0)
    return float(np.sum(terms) / W.shape[0])


def check_assignment(W, tol=1e-9):
    """Raise :class:`DomainError` unless ``W`` is a positive row-stochastic matrix."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[1] < 2:
        raise InvalidDimensionError(f"assignment matrix must be (n, c>=2), got {W.shape}")
    if np.any(W <= 0):
        raise DomainError("assignment matrix has non-positive entries")
    err = np.max(np.abs(W.sum(axis=1) - 1.0))
    if err > tol:
        raise DomainError(f"assignment rows do not sum to one (max deviation {err:.2e})")
    return W
