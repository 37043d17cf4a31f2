"""Per-layer prototype dictionaries under the Stein divergence."""
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import ConfigError, InvalidDimensionError
from .spd import (
    MeanConfig,
    is_spd,
    log_euclidean_mean,
    logdet,
    riemannian_mean,
    stein_divergence_matrix,
    stein_mean,
)

#: Mean configuration used inside Lloyd and EM iterations (large Stein step
#: for speed; rejected steps are halved).
CLUSTER_MEAN_CONFIG = MeanConfig(tolerance=1e-8, max_iters=500, stein_step=4.0)


@dataclass
class PrototypeDictionary:
    """Prototypes per layer: ``prototypes[l]`` has shape ``(K_l, d, d)``."""

    prototypes: List[np.ndarray]

    def __post_init__(self):
        if not self.prototypes:
            raise ConfigError("dictionary needs at least one layer")
        protos = []
        for l, P in enumerate(self.prototypes):
            P = np.asarray(P, dtype=float)
            if P.ndim == 2:
                P = P[None]
            if P.ndim != 3 or P.shape[0] < 1 or P.shape[1] != P.shape[2]:
                raise InvalidDimensionError(f"layer {l}: prototypes must be (K>=1, d, d)")
            protos.append(P)
        if len({P.shape[1] for P in protos}) != 1:
            raise InvalidDimensionError("all prototypes must share one matrix size")
        for l, P in enumerate(protos):
            if not all(is_spd(S) for S in P):
                raise ConfigError(f"layer {l} contains a prototype that is not SPD")
        self.prototypes = protos

    @property
    def layer_count(self):
        return len(self.prototypes)

    @property
    def dim(self):
        return self.prototypes[0].shape[1]

    @property
    def sizes(self):
        return [P.shape[0] for P in self.prototypes]


@dataclass
class MixtureState:
    """Result of :func:`em_soft_clustering`.

    ``weights`` (K,) mixture weights, ``means`` (K, d, d) component means,
    ``responsibilities`` (n, K), ``log_likelihood`` per iteration.
    """

    weights: np.ndarray
    means: np.ndarray
    responsibilities: np.ndarray
    log_likelihood: List[float]


def _mean(mats, weights, mean, config):
    if mean == "stein":
        return stein_mean(mats, weights, config)
    if mean == "riemannian":
        return riemannian_mean(mats, weights, config)
    if mean == "logeuclid":
        return log_euclidean_mean(mats, weights)
    raise ConfigError(f"unknown mean {mean!r}")


def _check_samples(samples, K):
    X = np.asarray(samples, dtype=float)
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise InvalidDimensionError(f"samples must be (n, d, d), got {X.shape}")
    if not 1 <= int(K) <= X.shape[0]:
        raise ConfigError(f"K must lie in [1, {X.shape[0]}], got {K}")
    return X


def kmeans_pp_seeds(X, K, rng, logdet_X=None):
    """k-means++ seeding with the Stein divergence as the distance.

    Returns the indices of the ``K`` chosen samples.
    """
    n = X.shape[0]
    ld = logdet(X) if logdet_X is None else logdet_X
    idx = [int(rng.integers(n))]
    dmin = stein_divergence_matrix(X, X[idx[0]][None], ld)[:, 0]
    for _ in range(1, K):
        total = dmin.sum()
        if total > 0:
            j = int(rng.choice(n, p=dmin / total))
        else:
            rest = np.setdiff1d(np.arange(n), idx)
            j = int(rest[0])
        idx.append(j)
        dmin = np.minimum(dmin, stein_divergence_matrix(X, X[j][None], ld)[:, 0])
    return np.array(idx)


def kmeans_stein(samples, K, seed=0, config=None, mean="stein", max_iter=100, rel_tol=1e-6,
                 full_output=False):
    """Lloyd's algorithm with Stein-divergence assignments.

    Parameters
    ----------
    samples : ndarray, shape (n, d, d)
    K : int
    seed : int
        Seeds the k-means++ initialisation.
    config : MeanConfig, optional
        Passed to the cluster mean.
    mean : {"stein", "riemannian", "logeuclid"}
        Cluster mean used in the update step.
    max_iter : int
    rel_tol : float
        Stop once the objective decreases by less than this fraction.
    full_output : bool
        Also return labels and the objective after every assignment step.

    Returns
    -------
    centers : ndarray, shape (K, d, d)
    labels : ndarray, shape (n,)
        Only with ``full_output``.
    objective : list of float
        Only with ``full_output``.

    Notes
    -----
    A cluster that loses all its samples is re-seeded at the sample lying
    farthest from its currently assigned center (lowest index on ties).
    """
    X = _check_samples(samples, K)
    config = config or CLUSTER_MEAN_CONFIG
    rng = np.random.default_rng(seed)
    ld = logdet(X)
    centers = X[kmeans_pp_seeds(X, K, rng, ld)].copy()
    history = []
    labels = None
    for _ in range(int(max_iter)):
        Dm = stein_divergence_matrix(X, centers, ld)
        labels = np.argmin(Dm, axis=1)
        d_own = Dm[np.arange(X.shape[0]), labels]
        for k in range(K):
            if not np.any(labels == k):
                far = int(np.argmax(d_own))
                centers[k] = X[far]
                labels[far] = k
                d_own[far] = 0.0
        history.append(float(d_own.sum()))
        if len(history) > 1 and history[-2] - history[-1] <= rel_tol * abs(history[-2]):
            break
        for k in range(K):
            members = X[labels == k]
            centers[k] = _mean(members, None, mean, config)
    if full_output:
        return centers, labels, history
    return centers


def em_soft_clustering(samples, K, seed=0, config=None, max_iter=100, tol=1e-6):
    """Soft clustering with a Stein-divergence exponential-family mixture.

    E-step: ``r_ij ∝ pi_j exp(-D_S(S_i, M_j))`` normalised with log-sum-exp.
    M-step: ``pi_j = sum_i r_ij / n`` and ``M_j`` the Stein mean of all
    samples weighted by ``r_:j``. Components start at k-means++ seeds with
    uniform weights.
    """
    X = _check_samples(samples, K)
    config = config or CLUSTER_MEAN_CONFIG
    rng = np.random.default_rng(seed)
    ld = logdet(X)
    n = X.shape[0]
    means = X[kmeans_pp_seeds(X, K, rng, ld)].copy()
    pi = np.full(K, 1.0 / K)
    history = []
    R = None
    for _ in range(int(max_iter)):
        logp = np.log(np.maximum(pi, 1e-300)) - stein_divergence_matrix(X, means, ld)
        top = logp.max(axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.exp(logp - top).sum(axis=1))
        R = np.exp(logp - lse[:, None])
        history.append(float(lse.sum()))
        mass = R.sum(axis=0)
        pi = mass / n
        for k in range(K):
            if mass[k] > 0:
                means[k] = stein_mean(X, R[:, k] / mass[k], config)
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * abs(history[-2]):
            break
    return MixtureState(pi, means, R, history)


def nearest_prototype_distance(descriptor, dictionary: PrototypeDictionary):
    """Stein divergence from one descriptor to the closest prototype of each layer."""
    S = np.asarray(descriptor, dtype=float)[None]
    ld = logdet(S)
    return np.array([stein_divergence_matrix(S, P, ld).min() for P in dictionary.prototypes])


def train_dictionary(descriptors, labels, c, K=8, seed=0, mean="stein", method="kmeans",
                     max_samples=1000, config=None):
    """Cluster the labelled descriptors of each layer into ``K`` prototypes.

    Parameters
    ----------
    descriptors : ndarray, shape (n, d, d)
    labels : ndarray, shape (n,)
        Ground-truth layer of each descriptor.
    c : int
        Number of layers.
    K : int
        Prototypes per layer (fewer if a layer has fewer samples).
    max_samples : int or None
        Random subsample per layer before clustering, for speed.
    method : {"kmeans", "em"}
    """
    X = np.asarray(descriptors, dtype=float)
    labels = np.asarray(labels).ravel()
    if labels.shape[0] != X.shape[0]:
        raise InvalidDimensionError("one label per descriptor required")
    rng = np.random.default_rng(seed)
    protos = []
    for l in range(c):
        idx = np.flatnonzero(labels == l)
        if idx.size == 0:
            raise ConfigError(f"layer {l} has no training samples")
        if max_samples is not None and idx.size > max_samples:
            idx = np.sort(rng.choice(idx, size=max_samples, replace=False))
        k = min(int(K), idx.size)
        layer_seed = int(rng.integers(2**31))
        if method == "kmeans":
            protos.append(kmeans_stein(X[idx], k, layer_seed, config, mean=mean))
        elif method == "em":
            protos.append(em_soft_clustering(X[idx], k, layer_seed, config).means)
        else:
            raise ConfigError(f"unknown clustering method {method!r}")
    return PrototypeDictionary(protos)
