"""Voxel features, region covariance descriptors and distance matrices.

Volumes are stored as arrays of shape ``(N, NA, NB)``: depth (z), position
within a B-scan (x, the A-scan axis) and B-scan index (y). Flattening a
volume for the flow uses depth-fastest (Fortran) order, so each A-scan is a
contiguous run of ``N`` rows.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ConfigError, IngestionError, InvalidDimensionError
from .spd import logdet, stein_divergence_matrix

#: Axis of each direction in a ``(N, NA, NB)`` array.
AXIS_Z, AXIS_X, AXIS_Y = 0, 1, 2
#: Channel order of the 10-dimensional feature vector.
CHANNELS = ("I", "dx", "dy", "dz", "dxy", "dyz", "dxz", "dxx", "dyy", "dzz")
DEFAULT_SCALES = (1.0, 2.0)
DEFAULT_NEIGHBORHOOD = (3, 5, 5)
DEFAULT_EPS_REG = 1e-6
TRUNCATE = 3.0


@dataclass
class Volume:
    """Scalar volume of shape ``(N, NA, NB)`` with optional spacing in micrometres."""

    data: np.ndarray
    spacing: Optional[Sequence[float]] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise InvalidDimensionError(f"volume must be 3-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ConfigError("volume contains non-finite values")

    @property
    def dims(self):
        return tuple(self.data.shape)

    @property
    def n_voxels(self):
        return self.data.size

    def flat(self):
        return self.data.ravel(order="F")


@dataclass
class LabeledVolume:
    """Integer labels in ``[0, c)`` on a ``(N, NA, NB)`` grid."""

    labels: np.ndarray
    c: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 3:
            raise InvalidDimensionError(f"labels must be 3-D, got shape {self.labels.shape}")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ConfigError("labels must be integers")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.c):
            raise ConfigError(f"labels must lie in [0, {self.c})")
        self.labels = self.labels.astype(np.int64)

    @property
    def dims(self):
        return tuple(self.labels.shape)

    def flat(self):
        return self.labels.ravel(order="F")

    @classmethod
    def from_flat(cls, flat, dims, c):
        return cls(np.asarray(flat).reshape(dims, order="F"), c)


def gaussian_kernels(sigma, truncate=TRUNCATE):
    """Sampled Gaussian smoothing, first and second derivative kernels.

    Offsets run from ``-r`` to ``r`` with ``r = ceil(truncate * sigma)``.
    Kernels are meant for correlation (``out[i] = sum_k k[x] f[i + x]``).

    * ``k0`` sums to one.
    * ``k1`` returns exactly 1 on the ramp ``f(x) = x`` and 0 on constants.
    * ``k2`` returns exactly 1 on ``x**2 / 2`` and 0 on constants and ramps.
    """
    if not sigma > 0:
        raise ConfigError("scales must be positive")
    r = int(np.ceil(truncate * sigma))
    x = np.arange(-r, r + 1, dtype=float)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    k0 = g / g.sum()
    k1 = x * g / np.sum(x * x * g)
    q = x * x * g
    q = q - g * (q.sum() / g.sum())
    k2 = q / np.sum(0.5 * x * x * q)
    return k0, k1, k2


def _filtered(data, orders, sigma):
    ks = gaussian_kernels(sigma)
    out = data
    for axis, order in enumerate(orders):
        out = correlate1d(out, ks[order], axis=axis, mode="nearest")
    return out


# (order along z, x, y) per derivative channel; mixed channels carry sqrt(2)
_DERIVATIVES = (
    ((0, 1, 0), 1.0),   # dx
    ((0, 0, 1), 1.0),   # dy
    ((1, 0, 0), 1.0),   # dz
    ((0, 1, 1), np.sqrt(2.0)),  # dxy
    ((1, 0, 1), np.sqrt(2.0)),  # dyz
    ((1, 1, 0), np.sqrt(2.0)),  # dxz
    ((0, 2, 0), 1.0),   # dxx
    ((0, 0, 2), 1.0),   # dyy
    ((2, 0, 0), 1.0),   # dzz
)


def _check_support(shape, scales):
    r = int(np.ceil(TRUNCATE * max(scales)))
    if min(shape) <= r:
        raise InvalidDimensionError(
            f"volume {tuple(shape)} is too small for scale {max(scales)} (kernel radius {r})")


def scale_normalized_derivatives(vol, scales=DEFAULT_SCALES):
    """Nine scale-normalised Gaussian derivatives, maximised over scales.

    Each response at scale ``sigma`` is multiplied by ``sigma**order``. Across
    scales the value of largest magnitude is kept together with its sign.

    Returns
    -------
    ndarray, shape (N, NA, NB, 9)
        Channels ``dx, dy, dz, dxy, dyz, dxz, dxx, dyy, dzz`` (mixed ones
        pre-multiplied by ``sqrt(2)``).
    """
    data = vol.data if isinstance(vol, Volume) else np.asarray(vol, dtype=float)
    scales = [float(s) for s in scales]
    if not scales:
        raise ConfigError("need at least one scale")
    _check_support(data.shape, scales)
    out = np.zeros(data.shape + (len(_DERIVATIVES),))
    for s in scales:
        for ch, (orders, factor) in enumerate(_DERIVATIVES):
            resp = factor * s ** sum(orders) * _filtered(data, orders, s)
            better = np.abs(resp) > np.abs(out[..., ch])
            out[..., ch] = np.where(better, resp, out[..., ch])
    return out


def feature_vector_field(vol, scales=DEFAULT_SCALES):
    """Raw intensity followed by the nine derivative channels, shape ``(..., 10)``."""
    data = vol.data if isinstance(vol, Volume) else np.asarray(vol, dtype=float)
    return np.concatenate([data[..., None], scale_normalized_derivatives(data, scales)], axis=-1)


def _axis_weights(extents, patch_weights):
    if len(extents) != 3 or any(int(e) < 1 or int(e) % 2 == 0 for e in extents):
        raise ConfigError(f"neighborhood extents must be three odd positive integers, got {extents}")
    ws = []
    for e in extents:
        e = int(e)
        if patch_weights == "uniform":
            ws.append(np.ones(e))
        elif patch_weights == "gaussian":
            x = np.arange(e) - e // 2
            ws.append(np.exp(-0.5 * (x / max(e / 4.0, 0.5)) ** 2))
        else:
            raise ConfigError(f"unknown patch weighting {patch_weights!r}")
    return ws


def region_covariance(features, center, neighborhood=DEFAULT_NEIGHBORHOOD, weights=None,
                      eps_reg=DEFAULT_EPS_REG):
    """Regularised weighted covariance of the features around one voxel.

    Parameters
    ----------
    features : ndarray, shape (N, NA, NB, F)
    center : (int, int, int)
    neighborhood : (int, int, int)
        Odd box extents along ``(depth, A, B)``.
    weights : ndarray, optional
        Nonnegative weights of shape ``neighborhood``; uniform if omitted.
        Offsets falling outside the volume are dropped and the remaining
        weights renormalised.
    eps_reg : float
        Added to the diagonal.

    Returns
    -------
    ndarray, shape (F, F)
    """
    if not eps_reg > 0:
        raise ConfigError("eps_reg must be positive")
    f = np.asarray(features, dtype=float)
    ext = tuple(int(e) for e in neighborhood)
    _axis_weights(ext, "uniform")
    theta = np.ones(ext) if weights is None else np.asarray(weights, dtype=float)
    if theta.shape != ext or np.any(theta < 0):
        raise ConfigError("weights must be nonnegative with the neighborhood's shape")
    sl, tl = [], []
    for c0, e, n in zip(center, ext, f.shape[:3]):
        lo, hi = c0 - e // 2, c0 + e // 2 + 1
        sl.append(slice(max(lo, 0), min(hi, n)))
        tl.append(slice(max(lo, 0) - lo, e - (hi - min(hi, n))))
    patch = f[tuple(sl)].reshape(-1, f.shape[-1])
    # centring on one sample first keeps a constant patch exactly zero
    patch = patch - patch[0]
    th = theta[tuple(tl)].ravel()
    th = th / th.sum()
    mean = th @ patch
    dev = patch - mean
    C = (dev * th[:, None]).T @ dev
    C = 0.5 * (C + C.T)
    return C + eps_reg * np.eye(f.shape[-1])


def covariance_field(features, neighborhood=DEFAULT_NEIGHBORHOOD, eps_reg=DEFAULT_EPS_REG,
                     patch_weights="uniform"):
    """Region covariance descriptor of every voxel, depth-fastest order.

    Moments are accumulated with separable box (or Gaussian) filters over
    the globally centred features; clipping at the border is handled by
    filtering an indicator volume with the same kernels.

    Returns
    -------
    ndarray, shape (N*NA*NB, F, F)
    """
    if not eps_reg > 0:
        raise ConfigError("eps_reg must be positive")
    f = np.asarray(features, dtype=float)
    F = f.shape[-1]
    ws = _axis_weights(neighborhood, patch_weights)

    def box(x):
        for axis, w in enumerate(ws):
            x = correlate1d(x, w, axis=axis, mode="constant", cval=0.0)
        return x

    f = f - f.reshape(-1, F).mean(axis=0)
    norm = box(np.ones(f.shape[:3]))
    mean = np.stack([box(f[..., k]) for k in range(F)], axis=-1) / norm[..., None]
    n = f[..., 0].size
    out = np.empty((n, F, F))
    mflat = mean.reshape(-1, F, order="F")
    for a in range(F):
        for b in range(a, F):
            m2 = (box(f[..., a] * f[..., b]) / norm).ravel(order="F")
            cov = m2 - mflat[:, a] * mflat[:, b]
            out[:, a, b] = cov
            out[:, b, a] = cov
    idx = np.arange(F)
    out[:, idx, idx] += eps_reg
    return out


def descriptors(vol, scales=DEFAULT_SCALES, neighborhood=DEFAULT_NEIGHBORHOOD,
                eps_reg=DEFAULT_EPS_REG, patch_weights="uniform"):
    """Covariance descriptors ``(n, 10, 10)`` of a volume, depth-fastest order."""
    return covariance_field(feature_vector_field(vol, scales), neighborhood, eps_reg, patch_weights)


def distances_to_dictionary(X, dictionary, logdet_X=None):
    """``D[i, j] = min_k D_S(X_i, P_j^k)`` for a batch of descriptors."""
    X = np.asarray(X, dtype=float)
    if X.shape[-2:] != (dictionary.dim, dictionary.dim):
        raise InvalidDimensionError(
            f"descriptor size {X.shape[-2:]} does not match dictionary size {dictionary.dim}")
    if logdet_X is None:
        logdet_X = logdet(X)
    D = np.empty((X.shape[0], dictionary.layer_count))
    for j, protos in enumerate(dictionary.prototypes):
        D[:, j] = stein_divergence_matrix(X, protos, logdet_X).min(axis=1)
    return D


def build_distance_matrix(vol, dictionary, scales=DEFAULT_SCALES, neighborhood=DEFAULT_NEIGHBORHOOD,
                          eps_reg=DEFAULT_EPS_REG, patch_weights="uniform"):
    """Distance of every voxel descriptor to its closest prototype per layer.

    Returns an ``(n, c)`` array in depth-fastest voxel order.
    """
    X = descriptors(vol, scales, neighborhood, eps_reg, patch_weights)
    return distances_to_dictionary(X, dictionary)


def ingest_scores(scores):
    """Convert class scores (larger is better) into nonnegative distances.

    The scores are negated and each row is shifted so its minimum is zero.
    The flow ignores per-row constants, so the shift does not change results.
    """
    C = np.asarray(scores, dtype=float)
    if C.ndim != 2 or C.shape[1] < 2:
        raise InvalidDimensionError(f"score matrix must be (n, c>=2), got {C.shape}")
    bad = ~np.all(np.isfinite(C), axis=1)
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0])
        raise IngestionError(f"score row {row} has non-finite entries", row=row)
    D = -C
    return D - D.min(axis=1, keepdims=True)
