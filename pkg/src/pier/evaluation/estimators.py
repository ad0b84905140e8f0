"""scikit-learn style wrappers around a frozen model and the clustering routine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from ..model.fused import FusedModel
from .clustering import agglomerative_cluster
from .embeddings import sentence_pie_embeddings


class PieEmbedder(BaseEstimator, TransformerMixin):
    """Map sentence records to pooled PIE-span embeddings.

    The model is frozen, so ``fit`` only records the output width.
    """

    def __init__(self, model: FusedModel | None = None, route: str | None = None, batch_size: int = 64):
        self.model = model
        self.route = route
        self.batch_size = batch_size

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("PieEmbedder needs a model")
        self.n_features_out_ = self.model.config.d_model
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "n_features_out_"):
            raise NotFittedError("PieEmbedder is not fitted")
        return sentence_pie_embeddings(self.model, list(X), self.route, self.batch_size)


class CosineAgglomerative(BaseEstimator, ClusterMixin):
    """Complete-linkage clustering under cosine distance into ``n_clusters`` groups."""

    def __init__(self, n_clusters: int = 2):
        self.n_clusters = n_clusters

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.labels_ = np.asarray(agglomerative_cluster(X, self.n_clusters).labels)
        return self
