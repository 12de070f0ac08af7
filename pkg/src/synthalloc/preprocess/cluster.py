"""Density clustering of the 2-D embedding into market regimes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import HDBSCAN

from ..errors import ParameterError


@dataclass(frozen=True)
class ClusterLabels:
    labels: np.ndarray
    k: int
    noise_reassigned: int = 0

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if self.k < 1 or labels.min() < 0 or labels.max() >= self.k:
            raise ParameterError("labels must be dense in 0..k-1")
        object.__setattr__(self, "labels", labels)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def to_dict(self) -> dict:
        return {"labels": self.labels.tolist(), "k": self.k,
                "noise_reassigned": self.noise_reassigned}

    @classmethod
    def from_dict(cls, d) -> "ClusterLabels":
        return cls(np.asarray(d["labels"], dtype=int), int(d["k"]), int(d["noise_reassigned"]))


def medoid(points: np.ndarray) -> np.ndarray:
    """Member minimizing the summed Euclidean distance to the other members."""
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
    return points[np.argmin(d.sum(axis=1))]


def hdbscan_cluster(embedding, min_cluster_size: int = 15,
                    min_samples: int | None = None) -> ClusterLabels:
    """HDBSCAN on the embedding; noise points join the cluster with the nearest medoid.

    Cluster ids are renumbered by first appearance so the result does not depend
    on the library's internal numbering. If everything is noise a single
    cluster is returned with a warning.
    """
    emb = np.asarray(embedding, dtype=float)
    m = emb.shape[0]
    if m < min_cluster_size:
        raise ParameterError(f"need at least min_cluster_size={min_cluster_size} points, got {m}")
    if min_cluster_size < 2:
        raise ParameterError("min_cluster_size must be >= 2")
    raw = HDBSCAN(min_cluster_size=min_cluster_size, min_samples=min_samples,
                  copy=True).fit_predict(emb)
    found = [c for c in dict.fromkeys(raw.tolist()) if c >= 0]
    if not found:
        warnings.warn("HDBSCAN labelled every point as noise; using a single cluster",
                      RuntimeWarning, stacklevel=2)
        return ClusterLabels(np.zeros(m, dtype=int), 1, noise_reassigned=m)

    remap = {c: i for i, c in enumerate(found)}
    labels = np.array([remap.get(c, -1) for c in raw], dtype=int)
    noise = labels < 0
    if noise.any():
        centers = np.vstack([medoid(emb[labels == i]) for i in range(len(found))])
        d = ((emb[noise][:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        labels[noise] = np.argmin(d, axis=1)
    return ClusterLabels(labels, len(found), noise_reassigned=int(noise.sum()))
