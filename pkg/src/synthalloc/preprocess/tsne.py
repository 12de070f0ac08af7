"""Exact t-SNE (O(m^2) affinities and gradient) for 2-D regime embeddings."""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError

EARLY_EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM_SWITCH_ITER = 250
MIN_GAIN = 0.01


def _squared_distances(X: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", X, X)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def conditional_affinities(D: np.ndarray, perplexity: float, tol: float = 1e-5,
                           max_iter: int = 200) -> np.ndarray:
    """Row-stochastic Gaussian affinities whose entropy matches log(perplexity).

    Precision per row is found by bisection, vectorized over rows.
    """
    m = D.shape[0]
    scale = D[~np.eye(m, dtype=bool)].mean() if m > 1 else 1.0
    D = D / (scale if scale > 0 else 1.0)
    off = ~np.eye(m, dtype=bool)
    Dm = np.where(off, D, np.inf)
    Dm = Dm - Dm.min(axis=1, keepdims=True)
    target = np.log(perplexity)
    beta = np.ones(m)
    lo = np.zeros(m)
    hi = np.full(m, np.inf)
    for _ in range(max_iter):
        P = np.exp(-Dm * beta[:, None])
        sP = P.sum(axis=1)
        H = np.log(sP) + beta * (np.where(off, Dm, 0.0) * P).sum(axis=1) / sP
        diff = H - target
        if np.all(np.abs(diff) < tol):
            break
        up = diff > 0
        lo = np.where(up, beta, lo)
        hi = np.where(up, hi, beta)
        beta = np.where(up, np.where(np.isinf(hi), beta * 2.0, 0.5 * (beta + hi)),
                        0.5 * (beta + lo))
    P = np.exp(-Dm * beta[:, None])
    return P / P.sum(axis=1, keepdims=True)


def joint_probabilities(X, perplexity: float) -> np.ndarray:
    P = conditional_affinities(_squared_distances(np.asarray(X, dtype=float)), perplexity)
    P = (P + P.T) / (2.0 * P.shape[0])
    return np.maximum(P, 1e-12)


def _q_num(Y: np.ndarray) -> np.ndarray:
    num = 1.0 / (1.0 + _squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    num = _q_num(Y)
    Q = np.maximum(num / num.sum(), 1e-12)
    mask = ~np.eye(P.shape[0], dtype=bool)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def tsne_embed(data, perplexity: float = 30.0, seed: int = 0, n_iter: int = 1000,
               learning_rate: float = 200.0, return_kl: bool = False):
    """Embed the rows of ``data`` in 2-D.

    Early exaggeration (x12) runs for the first 250 iterations and momentum
    steps from 0.5 to 0.8 at iteration 250. With ``return_kl`` the initial and
    final KL divergences are returned alongside the embedding.
    """
    X = np.asarray(data, dtype=float)
    m = X.shape[0]
    if perplexity < 1:
        raise ParameterError("perplexity must be >= 1")
    if m < 3 * perplexity:
        raise ParameterError(f"perplexity {perplexity} too large for {m} samples "
                             f"(need m >= 3 * perplexity)")
    P = joint_probabilities(X, perplexity)
    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(m, 2))
    kl0 = kl_divergence(P, Y)

    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(n_iter):
        exag = EARLY_EXAGGERATION if it < EXAGGERATION_ITERS else 1.0
        momentum = 0.5 if it < MOMENTUM_SWITCH_ITER else 0.8
        num = _q_num(Y)
        Q = np.maximum(num / num.sum(), 1e-12)
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)

    if return_kl:
        return Y, (kl0, kl_divergence(P, Y))
    return Y
