"""Intrinsic and extrinsic evaluation protocols."""

from .clustering import ClusterAssignment, agglomerative_cluster, cosine_distance_matrix, homogeneity_score
from .embeddings import (
    EmbeddingSet,
    PieEmbedding,
    build_embedding_set,
    embedding_set_from,
    sentence_pie_embeddings,
    span_labels,
    token_embeddings,
)
from .metrics import (
    binary_scores,
    mean_inter_group_cosine_distance,
    mean_inter_type_cosine_similarity,
    pearson_correlation,
    sequence_accuracy,
    token_accuracy,
    token_recall,
)
from .estimators import CosineAgglomerative, PieEmbedder
from .pipeline import ProbeSchedule, evaluate_model, evaluate_models, probe_seed_for, reconstruction_accuracy
from .probes import SenseProbe, SpanProbe, fit_sense_probes, fit_span_probes
from .report import MetricsReport, per_pie_csv, per_pie_report, skew_analysis

__all__ = [
    "ClusterAssignment", "CosineAgglomerative", "EmbeddingSet", "MetricsReport", "PieEmbedder", "PieEmbedding",
    "ProbeSchedule",
    "SenseProbe", "SpanProbe", "agglomerative_cluster", "binary_scores", "build_embedding_set",
    "cosine_distance_matrix", "embedding_set_from", "evaluate_model", "evaluate_models",
    "fit_sense_probes", "fit_span_probes", "homogeneity_score",
    "mean_inter_group_cosine_distance", "mean_inter_type_cosine_similarity", "pearson_correlation",
    "per_pie_csv", "per_pie_report", "probe_seed_for", "reconstruction_accuracy", "sentence_pie_embeddings",
    "sequence_accuracy", "skew_analysis", "span_labels", "token_accuracy", "token_recall",
]
