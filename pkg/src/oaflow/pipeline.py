"""Synthetic phantoms, training, segmentation and evaluation."""
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .clustering import PrototypeDictionary, train_dictionary
from .errors import ConfigError, InvalidDimensionError
from .features import (
    DEFAULT_EPS_REG,
    DEFAULT_NEIGHBORHOOD,
    DEFAULT_SCALES,
    LabeledVolume,
    Volume,
    descriptors,
    distances_to_dictionary,
)
from .flow import FlowConfig, NeighborhoodGraph, grid_ascans, integrate, round_labels

# Adjacent layers differ by a factor 4 to 16 in brightness, while layers of
# similar brightness lie far apart in depth.
DEFAULT_LAYER_MEANS = (0.1, 1.6, 0.4, 3.2, 0.8, 0.2)


@dataclass(frozen=True)
class PhantomConfig:
    """Layered synthetic volume.

    Boundary ``k`` (between layers ``k`` and ``k+1``) sits at depth
    ``(k+1) * N / c`` plus a sum of ``modes`` random low-frequency sinusoids
    whose amplitudes add up to ``amplitude`` voxels. ``layer_means`` defaults
    to a pattern in which only layers far apart in depth look alike.
    """

    dims: tuple = (64, 64, 8)
    layers: int = 6
    modes: int = 2
    amplitude: float = 2.0
    layer_means: Optional[Sequence[float]] = None
    noise: float = 0.005
    speckle: float = 0.2
    seed: int = 0

    def means(self):
        if self.layer_means is not None:
            m = tuple(float(v) for v in self.layer_means)
        else:
            m = tuple(DEFAULT_LAYER_MEANS[l % len(DEFAULT_LAYER_MEANS)] for l in range(self.layers))
        if len(m) != self.layers:
            raise ConfigError(f"{len(m)} layer means for {self.layers} layers")
        return m

    def validate(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ConfigError(f"dims must be three positive integers, got {self.dims}")
        if self.layers < 2:
            raise ConfigError("need at least two layers")
        if self.amplitude < 0 or self.noise < 0 or self.speckle < 0 or self.modes < 0:
            raise ConfigError("amplitude, modes and noise levels must be nonnegative")
        gap = self.dims[0] / self.layers
        if gap - 2 * self.amplitude < 1:
            raise ConfigError(
                f"amplitude {self.amplitude} lets boundaries {gap:.2f} voxels apart cross or touch")
        self.means()


def phantom_boundaries(config: PhantomConfig, rng=None):
    """Boundary depths, shape ``(c-1, NA, NB)``, strictly increasing along axis 0."""
    config.validate()
    rng = np.random.default_rng(config.seed) if rng is None else rng
    N, NA, NB = config.dims
    c = config.layers
    a = np.arange(NA)[:, None] / NA
    b = np.arange(NB)[None, :] / NB
    out = np.empty((c - 1, NA, NB))
    for k in range(c - 1):
        surf = np.full((NA, NB), (k + 1) * N / c)
        if config.modes:
            amps = rng.dirichlet(np.ones(config.modes)) * config.amplitude
            for amp in amps:
                fa, fb = rng.integers(1, 4), rng.integers(0, 2)
                phase = rng.uniform(0, 2 * np.pi)
                surf += amp * np.sin(2 * np.pi * (fa * a + fb * b) + phase)
        out[k] = surf
    return out


def generate_phantom(config: PhantomConfig = None):
    """Random layered volume and its ground-truth labels.

    A voxel at depth ``z`` belongs to the number of boundaries lying at or
    above ``z``. Intensities are ``mean * (1 + speckle * xi) + noise * eta``
    with independent standard normal ``xi`` and ``eta``.
    """
    config = config or PhantomConfig()
    rng = np.random.default_rng(config.seed)
    bnd = phantom_boundaries(config, rng)
    N = config.dims[0]
    z = np.arange(N)[None, :, None, None]
    labels = np.sum(bnd[:, None] <= z, axis=0).astype(np.int64)
    means = np.asarray(config.means())[labels]
    xi = rng.standard_normal(labels.shape)
    eta = rng.standard_normal(labels.shape)
    data = means * (1.0 + config.speckle * xi) + config.noise * eta
    return Volume(data), LabeledVolume(labels, config.layers)


def _labels(x):
    return x.labels if isinstance(x, LabeledVolume) else np.asarray(x)


def _pair(pred, truth):
    p, t = _labels(pred), _labels(truth)
    if p.shape != t.shape:
        raise InvalidDimensionError(f"label volumes differ in shape: {p.shape} vs {t.shape}")
    return p, t


def dice(pred, truth, layer):
    """Overlap ``2TP / (2TP + FP + FN)`` of one layer; 1 if it is absent from both."""
    p, t = _pair(pred, truth)
    pa, ta = p == layer, t == layer
    tp = np.count_nonzero(pa & ta)
    denom = np.count_nonzero(pa) + np.count_nonzero(ta)
    return 1.0 if denom == 0 else 2.0 * tp / denom


def column_ordered(labels):
    """Boolean ``(NA, NB)`` map of columns whose labels never decrease with depth."""
    lab = _labels(labels)
    return np.all(np.diff(lab, axis=0) >= 0, axis=0)


def boundary_positions(labels, boundary):
    """First depth index with label ``>= boundary + 1`` per column; ``-1`` if none."""
    lab = _labels(labels)
    hit = lab >= boundary + 1
    pos = np.argmax(hit, axis=0)
    return np.where(hit.any(axis=0), pos, -1)


def boundary_errors(pred, truth, boundary):
    """Per-column absolute boundary error with exclusions.

    Returns
    -------
    err : ndarray, shape (NA, NB)
        ``nan`` for excluded columns.
    n_missing : int
        Columns where the boundary is absent in either volume.
    n_unordered : int
        Columns excluded because the prediction is not ordered.
    """
    p, t = _pair(pred, truth)
    gp, gt = boundary_positions(p, boundary), boundary_positions(t, boundary)
    ordered = column_ordered(p)
    missing = (gp < 0) | (gt < 0)
    keep = ordered & ~missing
    err = np.where(keep, np.abs(gp - gt).astype(float), np.nan)
    return err, int(np.count_nonzero(missing & ordered)), int(np.count_nonzero(~ordered))


def mae(pred, truth, boundary):
    """Mean absolute boundary position error in voxels over valid columns."""
    err = boundary_errors(pred, truth, boundary)[0]
    return float(np.nanmean(err)) if np.any(~np.isnan(err)) else float("nan")


def count_order_violations(labels):
    """Depth-adjacent voxel pairs whose deeper label is smaller."""
    return int(np.count_nonzero(np.diff(_labels(labels), axis=0) < 0))


@dataclass
class MetricsReport:
    per_layer_dice: List[float]
    per_boundary_mae: List[float]
    violations: int
    runtime_s: float
    converged: Optional[bool] = None
    per_boundary_mae_std: List[float] = field(default_factory=list)
    excluded_columns: List[int] = field(default_factory=list)
    unordered_columns: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def evaluate(pred, truth, c=None, runtime_s=0.0, converged=None):
    """DICE per layer, MAE per boundary and the violation count."""
    p, t = _pair(pred, truth)
    if c is None:
        c = truth.c if isinstance(truth, LabeledVolume) else int(max(p.max(), t.max())) + 1
    d = [dice(p, t, l) for l in range(c)]
    maes, stds, excl = [], [], []
    n_unordered = 0
    for b in range(c - 1):
        err, miss, n_unordered = boundary_errors(p, t, b)
        valid = err[~np.isnan(err)]
        maes.append(float(valid.mean()) if valid.size else None)
        stds.append(float(valid.std()) if valid.size else None)
        excl.append(miss)
    return MetricsReport(d, maes, count_order_violations(p), float(runtime_s), converged,
                         stds, excl, n_unordered)


def train(volume, labels: LabeledVolume, K=8, seed=0, mean="stein", method="kmeans",
          scales=DEFAULT_SCALES, neighborhood=DEFAULT_NEIGHBORHOOD, eps_reg=DEFAULT_EPS_REG,
          max_samples=1000):
    """Build a prototype dictionary from a labelled volume."""
    if tuple(volume.dims) != tuple(labels.dims):
        raise InvalidDimensionError(f"volume dims {volume.dims} differ from label dims {labels.dims}")
    X = descriptors(volume, scales, neighborhood, eps_reg)
    return train_dictionary(X, labels.flat(), labels.c, K, seed, mean, method, max_samples)


def distance_matrix(volume, dictionary: PrototypeDictionary, scales=DEFAULT_SCALES,
                    neighborhood=DEFAULT_NEIGHBORHOOD, eps_reg=DEFAULT_EPS_REG):
    return distances_to_dictionary(descriptors(volume, scales, neighborhood, eps_reg), dictionary)


def segment_distances(D, dims, config: FlowConfig = None, ordered=True):
    """Run the flow on an ``(n, c)`` distance matrix laid out on ``dims``.

    Returns ``(LabeledVolume, W, FlowTrace)``.
    """
    config = config or FlowConfig()
    D = np.asarray(D, dtype=float)
    dims = tuple(int(v) for v in dims)
    if D.ndim != 2 or D.shape[0] != int(np.prod(dims)):
        raise InvalidDimensionError(
            f"distance matrix with {D.shape[0] if D.ndim else 0} rows does not fit volume dims {dims}")
    graph = NeighborhoodGraph.grid(dims, config.extents)
    W, trace = integrate(D, graph, grid_ascans(dims), config, ordered)
    return LabeledVolume.from_flat(round_labels(W), dims, D.shape[1]), W, trace


def argmax_labels(D, dims):
    """Nearest-prototype labelling without any spatial regularisation."""
    D = np.asarray(D)
    return LabeledVolume.from_flat(np.argmin(D, axis=1), dims, D.shape[1])


def segment(volume, dictionary: PrototypeDictionary, config: FlowConfig = None, ordered=True,
            scales=DEFAULT_SCALES, neighborhood=DEFAULT_NEIGHBORHOOD, eps_reg=DEFAULT_EPS_REG):
    """Features, distances and flow for one volume."""
    t0 = time.perf_counter()
    D = distance_matrix(volume, dictionary, scales, neighborhood, eps_reg)
    lab, W, trace = segment_distances(D, volume.dims, config, ordered)
    return lab, W, trace, time.perf_counter() - t0
