"""Per-column Gaussian-mixture mode encoding for the tabular GAN.

A value ``v`` is represented by the index of its most responsible mode ``k``
plus ``alpha = (v - mean_k) / (4 * std_k)`` clipped to [-1, 1].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError

STD_FLOOR = 1e-4
ALPHA_SCALE = 4.0


@dataclass(frozen=True)
class VgmColumnModel:
    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray
    active_mode_indices: np.ndarray
    converged: bool = True

    @property
    def n_modes(self) -> int:
        return self.means.size

    def log_responsibility(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float).reshape(-1, 1)
        z = (v - self.means) / self.stds
        return np.log(self.weights) - np.log(self.stds) - 0.5 * z * z

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist(),
                "weights": self.weights.tolist(),
                "active_mode_indices": self.active_mode_indices.tolist(),
                "converged": self.converged}

    @classmethod
    def from_dict(cls, d) -> "VgmColumnModel":
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["stds"], dtype=float),
                   np.asarray(d["weights"], dtype=float),
                   np.asarray(d["active_mode_indices"], dtype=int), bool(d["converged"]))


def _em(x: np.ndarray, k: int, max_iter: int, tol: float):
    m = x.size
    means = np.quantile(x, (np.arange(k) + 0.5) / k)
    stds = np.full(k, max(x.std() / k, STD_FLOOR))
    weights = np.full(k, 1.0 / k)
    prev = -np.inf
    converged = False
    for _ in range(max_iter):
        z = (x[:, None] - means) / stds
        logp = np.log(weights) - np.log(stds) - 0.5 * z * z - 0.5 * np.log(2 * np.pi)
        mx = logp.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(logp - mx).sum(axis=1))
        ll = lse.sum()
        resp = np.exp(logp - lse[:, None])
        nk = resp.sum(axis=0) + 1e-12
        weights = nk / m
        means = resp.T @ x / nk
        var = (resp * (x[:, None] - means) ** 2).sum(axis=0) / nk
        stds = np.maximum(np.sqrt(var), STD_FLOOR)
        if abs(ll - prev) <= tol * max(1.0, abs(ll)):
            converged = True
            break
        prev = ll
    z = (x[:, None] - means) / stds
    logp = np.log(weights) - np.log(stds) - 0.5 * z * z - 0.5 * np.log(2 * np.pi)
    mx = logp.max(axis=1, keepdims=True)
    ll = float((mx[:, 0] + np.log(np.exp(logp - mx).sum(axis=1))).sum())
    return means, stds, weights, ll, converged


def vgm_fit_column(column, max_modes: int = 10, prune_weight: float = 0.005,
                   max_iter: int = 2000, tol: float = 1e-6,
                   cover: bool = True) -> VgmColumnModel:
    """Fit a 1-D Gaussian mixture and keep only modes above ``prune_weight``.

    The number of components (1..max_modes) is chosen by BIC, which is what
    lets a unimodal column collapse to a single mode. Components whose weight
    falls below ``prune_weight`` are dropped and the rest renormalized. With
    ``cover`` the surviving stds are widened just enough that no fitted value
    needs clipping when encoded.
    """
    x = np.asarray(column, dtype=float).ravel()
    if max_modes < 1:
        raise ParameterError("max_modes must be >= 1")
    if x.size < 2 * max_modes:
        raise ParameterError(f"need at least {2 * max_modes} values for {max_modes} modes")
    if not np.all(np.isfinite(x)):
        raise ParameterError("column contains non-finite values")

    best = None
    worse_in_row = 0
    for k in range(1, max_modes + 1):
        means, stds, weights, ll, conv = _em(x, k, max_iter, tol)
        bic = -2.0 * ll + (3 * k - 1) * np.log(x.size)
        if best is None or bic < best[0] - 1e-9:
            best = (bic, means, stds, weights, conv)
            worse_in_row = 0
        else:
            worse_in_row += 1
            if worse_in_row >= 2:
                break
    _, means, stds, weights, conv = best
    if not conv:
        warnings.warn("mixture EM did not converge; using best iterate", RuntimeWarning,
                      stacklevel=2)
    order = np.argsort(means)
    means, stds, weights = means[order], stds[order], weights[order]
    keep = np.flatnonzero(weights >= prune_weight)
    if keep.size == 0:
        keep = np.array([int(np.argmax(weights))])
    w = weights[keep] / weights[keep].sum()
    stds = _cover(x, means[keep], stds[keep], w) if cover else stds[keep]
    return VgmColumnModel(means[keep], stds, w, keep, converged=conv)


def _cover(x, means, stds, weights, max_rounds: int = 50):
    """Widen modes until every fitted value encodes without clipping.

    Stds only grow, so assignments settle after a few rounds; the fitted data
    then round-trips exactly through transform/inverse.
    """
    stds = stds.copy()
    for _ in range(max_rounds):
        z = (x[:, None] - means) / stds
        k = np.argmax(np.log(weights) - np.log(stds) - 0.5 * z * z, axis=1)
        need = np.abs(x - means[k]) / ALPHA_SCALE
        wider = np.zeros_like(stds)
        np.maximum.at(wider, k, need)
        if np.all(wider <= stds):
            break
        stds = np.maximum(stds, wider * (1 + 1e-12))
    return stds


def mode_transform(model: VgmColumnModel, values) -> tuple[np.ndarray, np.ndarray]:
    """Encode values as (clipped alpha, one-hot of the most responsible mode)."""
    scalar = np.ndim(values) == 0
    v = np.atleast_1d(np.asarray(values, dtype=float))
    k = np.argmax(model.log_responsibility(v), axis=1)
    alpha = np.clip((v - model.means[k]) / (ALPHA_SCALE * model.stds[k]), -1.0, 1.0)
    onehot = np.zeros((v.size, model.n_modes))
    onehot[np.arange(v.size), k] = 1.0
    if scalar:
        return alpha[0], onehot[0]
    return alpha, onehot


def mode_inverse(model: VgmColumnModel, alpha, mode_onehot) -> np.ndarray:
    """Decode; a soft mode vector is hardened to its argmax."""
    scalar = np.ndim(alpha) == 0
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    oh = np.atleast_2d(np.asarray(mode_onehot, dtype=float))
    k = np.argmax(oh, axis=1)
    v = model.means[k] + np.clip(a, -1.0, 1.0) * ALPHA_SCALE * model.stds[k]
    return v[0] if scalar else v
