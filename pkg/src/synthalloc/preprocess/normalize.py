"""Z-score normalization and a full-rank, invertible PCA rotation.

All standard deviations use the population (1/m) convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientDataError, NumericError, ShapeError

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class NormalizationStats:
    means: np.ndarray
    stds: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.stds <= DEGENERATE_TOL * np.maximum(1.0, np.abs(self.means))

    @property
    def _scale(self) -> np.ndarray:
        return np.where(self.degenerate, 1.0, self.stds)

    def apply(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float)
        if data.shape[-1] != self.means.size:
            raise ShapeError(f"expected {self.means.size} columns, got {data.shape[-1]}")
        z = (data - self.means) / self._scale
        return np.where(self.degenerate, 0.0, z)

    def invert(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.means.size:
            raise ShapeError(f"expected {self.means.size} columns, got {z.shape[-1]}")
        return np.where(self.degenerate, self.means, z * self._scale + self.means)

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d) -> "NormalizationStats":
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["stds"], dtype=float))


def zscore_fit(data) -> NormalizationStats:
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] < 2:
        raise InsufficientDataError("z-score needs at least 2 samples")
    return NormalizationStats(data.mean(axis=0), data.std(axis=0))


def zscore_fit_apply(data) -> tuple[np.ndarray, NormalizationStats]:
    """Normalize each column to mean 0 / std 1; constant columns become zeros."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    stats = zscore_fit(data)
    return stats.apply(data), stats


@dataclass(frozen=True)
class PcaModel:
    eigenvectors: np.ndarray  # columns are components
    eigenvalues: np.ndarray
    column_stats: NormalizationStats

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def to_dict(self) -> dict:
        return {
            "eigenvectors": self.eigenvectors.ravel().tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "stats": self.column_stats.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "PcaModel":
        vals = np.asarray(d["eigenvalues"], dtype=float)
        k = vals.size
        vecs = np.asarray(d["eigenvectors"], dtype=float).reshape(k, k)
        return cls(vecs, vals, NormalizationStats.from_dict(d["stats"]))


def pca_fit(data, stats: NormalizationStats | None = None) -> PcaModel:
    """Eigendecomposition of the covariance of the z-scored data.

    ``data`` is the raw sample-major matrix; normalization statistics are fitted
    here (or taken from ``stats``) and stored so the rotation can be undone.
    Every component is kept.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise InsufficientDataError("PCA needs a 2-D matrix with at least 2 rows")
    stats = stats or zscore_fit(data)
    z = stats.apply(data)
    cov = z.T @ z / z.shape[0]
    if not np.all(np.isfinite(cov)):
        raise NumericError("covariance matrix is not finite")
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    # fix the sign: largest-magnitude loading of each component is positive
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    # C order so a model reloaded from JSON multiplies bit-identically
    return PcaModel(np.ascontiguousarray(vecs * signs), vals, stats)


def pca_transform(model: PcaModel, data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.shape[-1] != model.dim:
        raise ShapeError(f"expected {model.dim} columns, got {data.shape[-1]}")
    return model.column_stats.apply(data) @ model.eigenvectors


def pca_inverse(model: PcaModel, data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.shape[-1] != model.dim:
        raise ShapeError(f"expected {model.dim} columns, got {data.shape[-1]}")
    return model.column_stats.invert(data @ model.eigenvectors.T)
