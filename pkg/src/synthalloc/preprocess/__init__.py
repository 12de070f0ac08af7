"""Normalization, PCA, 2-D embedding, regime clustering and mode encoding."""

from .cluster import ClusterLabels, hdbscan_cluster
from .normalize import (
    NormalizationStats,
    PcaModel,
    pca_fit,
    pca_inverse,
    pca_transform,
    zscore_fit,
    zscore_fit_apply,
)
from .tsne import tsne_embed
from .vgm import VgmColumnModel, mode_inverse, mode_transform, vgm_fit_column

__all__ = [
    "ClusterLabels",
    "NormalizationStats",
    "PcaModel",
    "VgmColumnModel",
    "hdbscan_cluster",
    "mode_inverse",
    "mode_transform",
    "pca_fit",
    "pca_inverse",
    "pca_transform",
    "tsne_embed",
    "vgm_fit_column",
    "zscore_fit",
    "zscore_fit_apply",
]
