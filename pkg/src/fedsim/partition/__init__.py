"""Non-IID client partitioning and distribution-shift diagnostics."""

from .diagnostics import js_divergence, jsd_matrix, mean_off_diagonal
from .dirichlet import (
    balanced_sizes,
    cluster_feature_partition,
    dirichlet_label_partition,
    largest_remainder,
    natural_partition,
    quantity_partition,
    sample_dirichlet,
)
from .embed import embed_many, embed_text
from .io import load_partition, save_partition, write_jsd_csv
from .kmeans import kmeans
from .spec import PartitionResult, PartitionSpec, Strategy

__all__ = [
    "PartitionResult",
    "PartitionSpec",
    "Strategy",
    "balanced_sizes",
    "cluster_feature_partition",
    "dirichlet_label_partition",
    "embed_many",
    "embed_text",
    "js_divergence",
    "jsd_matrix",
    "kmeans",
    "largest_remainder",
    "load_partition",
    "mean_off_diagonal",
    "natural_partition",
    "quantity_partition",
    "sample_dirichlet",
    "save_partition",
    "write_jsd_csv",
]
