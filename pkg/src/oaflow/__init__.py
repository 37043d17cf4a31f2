"""Ordered assignment flows for layered volume segmentation."""
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    IngestionError,
    InvalidDimensionError,
    OAFlowError,
)
from .simplex import barycenter, exp_affine, exp_affine_inverse, exp_lifted, replicator_map
from .spd import (
    MeanConfig,
    log_euclidean_mean,
    riemannian_distance,
    riemannian_mean,
    stein_divergence,
    stein_mean,
)
from .ordering import OrderingOperator, OrderingPenaltyConfig, construct_ordered_coupling, is_ordered
from .flow import FlowConfig, FlowTrace, NeighborhoodGraph, integrate, round_labels
from .features import LabeledVolume, Volume, build_distance_matrix, ingest_scores
from .clustering import PrototypeDictionary, em_soft_clustering, kmeans_stein
from .pipeline import PhantomConfig, count_order_violations, dice, evaluate, generate_phantom, mae

__version__ = "0.1.0"
