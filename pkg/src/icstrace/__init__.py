"""Attribute malicious S7comm source IPs to organizations.

Honeypot sessions are decoded into function-code and parameter streams,
turned into per-IP attack-pattern vectors, clustered with Partial Seeded
K-Means and labeled from auxiliary DNS/geo metadata.
"""

from .attribution import ClusterLabel, Thresholds, label_clusters, load_auxiliary_map
from .clustering import ClusterPartition, Dataset, KMeansOptions, SeedSet, partial_seeded_kmeans
from .features import FeatureMatrix, ScalingConfig, extract_features
from .ingest import assemble_ip_profiles, load_session_log, report_counts
from .metrics import (
    adjusted_mutual_information,
    adjusted_rand_index,
    calinski_harabasz_score,
    k_sweep,
    silhouette_score,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterLabel",
    "ClusterPartition",
    "Dataset",
    "FeatureMatrix",
    "KMeansOptions",
    "ScalingConfig",
    "SeedSet",
    "Thresholds",
    "adjusted_mutual_information",
    "adjusted_rand_index",
    "assemble_ip_profiles",
    "calinski_harabasz_score",
    "extract_features",
    "k_sweep",
    "label_clusters",
    "load_auxiliary_map",
    "load_session_log",
    "partial_seeded_kmeans",
    "report_counts",
    "silhouette_score",
]
