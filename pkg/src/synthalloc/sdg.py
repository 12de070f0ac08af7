"""Synthetic data generator: normalize -> PCA -> t-SNE -> HDBSCAN -> mode
encoding -> conditional GAN, and the reverse path for generated rows."""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ctgan import ConditionalGan, CtganConfig, RowLayout, ctgan_train
from .errors import InsufficientDataError, PipelineError, SchemaError, ShapeError
from .market_data import ScenarioTable
from .preprocess import (
    ClusterLabels,
    PcaModel,
    VgmColumnModel,
    hdbscan_cluster,
    mode_inverse,
    mode_transform,
    pca_fit,
    pca_inverse,
    pca_transform,
    tsne_embed,
    vgm_fit_column,
)

log = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1
MIN_HISTORY = 200


@dataclass(frozen=True)
class PreprocessConfig:
    perplexity: float = 30.0
    tsne_iter: int = 1000
    min_cluster_size: int | None = None  # None -> max(15, m // 20)
    max_modes: int = 10
    prune_weight: float = 0.005

    def cluster_size_for(self, m: int) -> int:
        if self.min_cluster_size is not None:
            return self.min_cluster_size
        return max(15, m // 20)


@dataclass
class Preprocessed:
    """Deterministic front half of the pipeline; reusable across GAN retrains."""

    pca: PcaModel
    clusters: ClusterLabels
    vgm: list[VgmColumnModel]
    n_assets: int
    tickers: tuple[str, ...]
    tenors: tuple[str, ...]

    @property
    def layout(self) -> RowLayout:
        return RowLayout(tuple(v.n_modes for v in self.vgm), self.clusters.k)

    def encode(self, joint: np.ndarray, labels=None) -> np.ndarray:
        """Raw sample-major rows -> mode-encoded GAN rows."""
        pc = pca_transform(self.pca, joint)
        parts = []
        for j, model in enumerate(self.vgm):
            a, oh = mode_transform(model, pc[:, j])
            parts += [a[:, None], oh]
        labels = self.clusters.labels if labels is None else np.asarray(labels, dtype=int)
        parts.append(np.eye(self.clusters.k)[labels])
        return np.hstack(parts)

    def decode(self, encoded: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Hardened GAN rows -> (raw sample-major rows, cluster ids)."""
        layout = self.layout
        if encoded.shape[1] != layout.dim:
            raise ShapeError(f"encoded width {encoded.shape[1]} != {layout.dim}")
        cols = []
        for j, model in enumerate(self.vgm):
            a_blk, m_blk = layout.blocks[2 * j], layout.blocks[2 * j + 1]
            cols.append(mode_inverse(model, encoded[:, a_blk.start],
                                     encoded[:, m_blk.start:m_blk.end]))
        pc = np.column_stack(cols)
        cb = layout.cluster_block
        ids = np.argmax(encoded[:, cb.start:cb.end], axis=1)
        return pca_inverse(self.pca, pc), ids

    def to_dict(self) -> dict:
        return {"pca": self.pca.to_dict(), "clusters": self.clusters.to_dict(),
                "vgm": [v.to_dict() for v in self.vgm], "n_assets": self.n_assets,
                "tickers": list(self.tickers), "tenors": list(self.tenors)}

    @classmethod
    def from_dict(cls, d) -> "Preprocessed":
        return cls(PcaModel.from_dict(d["pca"]), ClusterLabels.from_dict(d["clusters"]),
                   [VgmColumnModel.from_dict(v) for v in d["vgm"]], int(d["n_assets"]),
                   tuple(d["tickers"]), tuple(d["tenors"]))


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as e:  # noqa: BLE001 - re-raised with the stage name
        raise PipelineError(name, e) from e


def fit_preprocessing(history: ScenarioTable, settings: PreprocessConfig | None = None,
                      seed: int = 0) -> Preprocessed:
    settings = settings or PreprocessConfig()
    if history.m < MIN_HISTORY:
        raise InsufficientDataError(f"need at least {MIN_HISTORY} historical samples, "
                                    f"got {history.m}")
    joint = history.joint()
    pca = _stage("pca", pca_fit, joint)
    pc = pca_transform(pca, joint)
    emb = _stage("tsne", tsne_embed, pc, settings.perplexity, seed, settings.tsne_iter)
    clusters = _stage("hdbscan", hdbscan_cluster, emb,
                      settings.cluster_size_for(history.m))
    vgm = _stage("vgm", lambda: [vgm_fit_column(pc[:, j], settings.max_modes,
                                                settings.prune_weight)
                                 for j in range(pc.shape[1])])
    log.info("preprocessing: %d samples, %d clusters, %d encoded columns",
             history.m, clusters.k, sum(1 + v.n_modes for v in vgm))
    return Preprocessed(pca, clusters, vgm, history.n_assets, history.tickers, history.tenors)


@dataclass
class SdgModel:
    pre: Preprocessed
    gan: ConditionalGan
    config: CtganConfig
    loss_history: list[dict] = field(default_factory=list)

    @property
    def pca(self) -> PcaModel:
        return self.pre.pca

    @property
    def vgm(self) -> list[VgmColumnModel]:
        return self.pre.vgm

    @property
    def clusters(self) -> ClusterLabels:
        return self.pre.clusters

    @property
    def cluster_frequencies(self) -> np.ndarray:
        return self.pre.clusters.counts


@dataclass(frozen=True)
class SyntheticDataset:
    R_s: np.ndarray  # (n, m_s)
    F_s: np.ndarray  # (l, m_s)
    cluster_ids: np.ndarray
    tickers: tuple[str, ...] = ()
    tenors: tuple[str, ...] = ()

    @property
    def m(self) -> int:
        return self.R_s.shape[1]

    def joint(self) -> np.ndarray:
        return np.hstack([self.R_s.T, self.F_s.T])


def train_sdg_pipeline(history: ScenarioTable, config: CtganConfig | None = None,
                       settings: PreprocessConfig | None = None,
                       preprocessed: Preprocessed | None = None) -> SdgModel:
    """Fit the whole generator on a historical scenario table.

    Pass ``preprocessed`` to skip the deterministic front half (it depends only
    on the data and the seed) when several GANs are trained on one window.
    """
    config = config or CtganConfig()
    if history.m < MIN_HISTORY:
        raise InsufficientDataError(f"need at least {MIN_HISTORY} historical samples, "
                                    f"got {history.m}")
    pre = preprocessed or fit_preprocessing(history, settings, seed=config.seed)
    encoded = _stage("encode", pre.encode, history.joint())
    gan = _stage("ctgan", ctgan_train, encoded, pre.clusters, pre.layout, config)
    return SdgModel(pre, gan, config, list(gan.history))


def generate_synthetic(model: SdgModel, m_s: int, rng: np.random.Generator,
                       condition_sampling: str = "log") -> SyntheticDataset:
    """Draw ``m_s`` synthetic scenarios and map them back to return/feature space."""
    if m_s < 1:
        raise ValueError("m_s must be >= 1")
    enc = model.gan.sample_encoded(m_s, rng, model.cluster_frequencies, condition_sampling)
    joint, ids = model.pre.decode(enc)
    n = model.pre.n_assets
    return SyntheticDataset(joint[:, :n].T.copy(), joint[:, n:].T.copy(), ids,
                            model.pre.tickers, model.pre.tenors)


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).copy()


def save_model(model: SdgModel, path, provenance: str | None = None) -> None:
    doc = {
        "schema": "synthalloc.sdg",
        "version": MODEL_SCHEMA_VERSION,
        "config": model.config.to_dict(),
        "preprocess": model.pre.to_dict(),
        "weights": {k: _encode_array(v) for k, v in model.gan.get_weights().items()},
        "loss_history": model.loss_history,
    }
    if provenance:
        doc["provenance"] = provenance
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path) -> SdgModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != "synthalloc.sdg":
        raise SchemaError(f"{path} is not a synthalloc SDG model", column="schema")
    if doc.get("version") != MODEL_SCHEMA_VERSION:
        raise SchemaError(f"unsupported model version {doc.get('version')}", column="version")
    config = CtganConfig(**doc["config"])
    pre = Preprocessed.from_dict(doc["preprocess"])
    gan = ConditionalGan(pre.layout, config)
    gan.set_weights({k: _decode_array(v) for k, v in doc["weights"].items()})
    gan.history = list(doc.get("loss_history", []))
    return SdgModel(pre, gan, config, gan.history)
