"""Conditional tabular GAN: residual generator, pac-ed WGAN-GP critic,
log-frequency conditioning and training-by-sampling.

Rows handed to the networks are already mode-encoded: for every continuous
column an ``alpha`` (tanh block) followed by its mode one-hot (softmax block),
then the cluster one-hot as the last softmax block.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .errors import ParameterError, ShapeError, TrainingError

log = logging.getLogger(__name__)


@dataclass
class CtganConfig:
    embedding_dim: int = 128
    generator_dims: tuple[int, ...] = (256, 256)
    discriminator_dims: tuple[int, ...] = (256, 256)
    pac_size: int = 10
    learning_rate: float = 1e-4
    epochs: int = 1500
    batch_size: int = 500
    gumbel_tau: float = 0.2
    gp_weight: float = 10.0
    weight_decay: float = 1e-6
    dropout: float = 0.5
    discriminator_steps: int = 1
    seed: int = 0

    def __post_init__(self):
        self.generator_dims = tuple(int(d) for d in self.generator_dims)
        self.discriminator_dims = tuple(int(d) for d in self.discriminator_dims)
        if self.pac_size < 1:
            raise ParameterError("pac_size must be >= 1")
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ParameterError("epochs must be >= 0")
        if self.discriminator_steps < 1:
            raise ParameterError("discriminator_steps must be >= 1")
        self.batch_size = max(self.pac_size, self.batch_size // self.pac_size * self.pac_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generator_dims"] = list(self.generator_dims)
        d["discriminator_dims"] = list(self.discriminator_dims)
        return d


@dataclass(frozen=True)
class Block:
    kind: str  # "tanh" or "softmax"
    start: int
    end: int

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class RowLayout:
    """Column blocks of an encoded row; the last block is the cluster one-hot."""

    mode_counts: tuple[int, ...]
    n_clusters: int
    blocks: tuple[Block, ...] = field(init=False)

    def __post_init__(self):
        blocks = []
        pos = 0
        for k in self.mode_counts:
            blocks.append(Block("tanh", pos, pos + 1))
            blocks.append(Block("softmax", pos + 1, pos + 1 + k))
            pos += 1 + k
        blocks.append(Block("softmax", pos, pos + self.n_clusters))
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def dim(self) -> int:
        return self.blocks[-1].end

    @property
    def cluster_block(self) -> Block:
        return self.blocks[-1]


def log_frequency_probs(counts) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    if c.size < 1 or np.any(c <= 0):
        raise ParameterError("cluster counts must be positive")
    w = np.log1p(c)
    return w / w.sum()


def sample_condition_vector(frequencies, rng: np.random.Generator, size: int | None = None):
    """Draw cluster id(s) with probability proportional to log(1 + count).

    Returns ``(ids, one_hot)``; scalars when ``size`` is None.
    """
    p = log_frequency_probs(frequencies)
    k = p.size
    ids = rng.choice(k, size=1 if size is None else size, p=p)
    onehot = np.zeros((ids.size, k))
    onehot[np.arange(ids.size), ids] = 1.0
    if size is None:
        return int(ids[0]), onehot[0]
    return ids, onehot


class Generator:
    """Residual blocks (Linear -> BatchNorm -> ReLU, concatenated with input) + Linear."""

    def __init__(self, input_dim: int, dims, data_dim: int, rng: np.random.Generator):
        self.blocks = []
        dim = input_dim
        for d in dims:
            self.blocks.append((nn.Linear(dim, d, rng), nn.BatchNorm1d(d)))
            dim += d
        self.out = nn.Linear(dim, data_dim, rng)
        self.input_dim = input_dim
        self.data_dim = data_dim

    @property
    def layers(self):
        return [l for blk in self.blocks for l in blk] + [self.out]

    def n_params(self) -> int:
        return sum(l.n_params() for l in self.layers)

    def forward(self, x, train: bool = True, update_stats: bool = True):
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"generator expects {self.input_dim} inputs, got {x.shape[1]}")
        h = x
        caches = []
        for lin, bn in self.blocks:
            a, c1 = lin.forward(h)
            b, c2 = bn.forward(a, train=train, update_stats=update_stats)
            active = b > 0
            caches.append((c1, c2, active))
            h = np.hstack([b * active, h])
        raw, c3 = self.out.forward(h)
        return raw, (caches, c3)

    def backward(self, cache, draw):
        caches, c3 = cache
        dh = self.out.backward(c3, draw)
        for (lin, bn), (c1, c2, active) in zip(reversed(self.blocks), reversed(caches)):
            o = lin.params["b"].size
            dr, dprev = dh[:, :o], dh[:, o:]
            da = bn.backward(c2, dr * active)
            dh = dprev + lin.backward(c1, da)
        return dh


def activate(raw, layout: RowLayout, tau: float, rng: np.random.Generator):
    """tanh on alpha blocks, gumbel-softmax on categorical blocks."""
    out = np.empty_like(raw)
    for blk in layout.blocks:
        s = raw[:, blk.start:blk.end]
        if blk.kind == "tanh":
            out[:, blk.start:blk.end] = np.tanh(s)
        else:
            g = rng.gumbel(size=s.shape)
            out[:, blk.start:blk.end] = nn.gumbel_softmax(s, tau, g)
    return out


def activate_backward(out, dout, layout: RowLayout, tau: float):
    draw = np.empty_like(dout)
    for blk in layout.blocks:
        y = out[:, blk.start:blk.end]
        dy = dout[:, blk.start:blk.end]
        if blk.kind == "tanh":
            draw[:, blk.start:blk.end] = (1.0 - y * y) * dy
        else:
            draw[:, blk.start:blk.end] = nn.gumbel_softmax_backward(y, dy, tau)
    return draw


def harden(act, layout: RowLayout) -> np.ndarray:
    """Replace every categorical block by the one-hot of its argmax."""
    out = act.copy()
    for blk in layout.blocks:
        if blk.kind == "softmax":
            s = act[:, blk.start:blk.end]
            oh = np.zeros_like(s)
            oh[np.arange(s.shape[0]), np.argmax(s, axis=1)] = 1.0
            out[:, blk.start:blk.end] = oh
    return out


class Discriminator:
    """Critic over packs of ``pac`` rows: (Linear -> LeakyReLU(0.2) -> Dropout)* -> Linear."""

    def __init__(self, row_dim: int, dims, pac: int, rng: np.random.Generator,
                 dropout: float = 0.5, slope: float = 0.2):
        self.pac = pac
        self.row_dim = row_dim
        self.dropout = dropout
        self.slope = slope
        dim = row_dim * pac
        self.hidden = []
        for d in dims:
            self.hidden.append(nn.Linear(dim, d, rng))
            dim = d
        self.out = nn.Linear(dim, 1, rng)

    @property
    def layers(self):
        return self.hidden + [self.out]

    def n_params(self) -> int:
        return sum(l.n_params() for l in self.layers)

    def zero_grad(self):
        for l in self.layers:
            l.zero_grad()

    def _pack(self, rows):
        if rows.shape[1] != self.row_dim:
            raise ShapeError(f"critic expects rows of width {self.row_dim}, got {rows.shape[1]}")
        if rows.shape[0] % self.pac:
            raise ShapeError(f"batch of {rows.shape[0]} is not a multiple of pac={self.pac}")
        return rows.reshape(-1, self.pac * self.row_dim)

    def _masks(self, rng, n_rows):
        """Dropout multipliers (already scaled by 1/(1-p)); ones when rng is None."""
        masks = []
        for lin in self.hidden:
            d = lin.params["b"].size
            if rng is None or self.dropout == 0:
                masks.append(np.ones((n_rows, d)))
            else:
                keep = rng.random((n_rows, d)) >= self.dropout
                masks.append(keep / (1.0 - self.dropout))
        return masks

    def forward(self, rows, rng=None, masks=None):
        h = self._pack(rows)
        if masks is None:
            masks = self._masks(rng, h.shape[0])
        caches = []
        for lin, mask in zip(self.hidden, masks):
            a, c = lin.forward(h)
            coef = np.where(a > 0, 1.0, self.slope) * mask
            caches.append((c, coef))
            h = a * coef
        y, c = self.out.forward(h)
        return y[:, 0], (caches, c)

    def backward(self, cache, dout):
        caches, c = cache
        dh = self.out.backward(c, np.asarray(dout, dtype=float).reshape(-1, 1))
        for lin, (cl, coef) in zip(reversed(self.hidden), reversed(caches)):
            dh = lin.backward(cl, dh * coef)
        return dh.reshape(-1, self.row_dim)

    def gradient_penalty(self, real, fake, rng, weight: float, eps=None, masks=None):
        """WGAN-GP term on per-pack interpolates; accumulates its parameter gradients.

        The critic is piecewise linear, so the input gradient is a product of
        weight matrices and fixed activation coefficients, and its derivative
        w.r.t. the weights follows by differentiating that product.
        """
        pr, pf = self._pack(real), self._pack(fake)
        n = pr.shape[0]
        if eps is None:
            eps = rng.random((n, 1))
        x = eps * pr + (1.0 - eps) * pf
        if masks is None:
            masks = self._masks(rng, n)
        coefs = []
        h = x
        for lin, mask in zip(self.hidden, masks):
            a = h @ lin.params["W"].T + lin.params["b"]
            coef = np.where(a > 0, 1.0, self.slope) * mask
            coefs.append(coef)
            h = a * coef
        # input gradient of the critic output, per pack
        w_out = self.out.params["W"][0]
        delta = np.broadcast_to(w_out, (n, w_out.size))
        es = []
        for lin, coef in zip(reversed(self.hidden), reversed(coefs)):
            e = delta * coef
            es.append(e)
            delta = e @ lin.params["W"]
        es.reverse()
        g = delta
        norm = np.sqrt((g * g).sum(axis=1))
        pen = weight * np.mean((norm - 1.0) ** 2)
        safe = np.where(norm > 0, norm, 1.0)
        dd = (weight * 2.0 * (norm - 1.0) / safe / n)[:, None] * g
        for i, lin in enumerate(self.hidden):
            e = es[i]
            lin.grads["W"] += e.T @ dd
            de = dd @ lin.params["W"].T
            dd = de * coefs[i]
        self.out.grads["W"][0] += dd.sum(axis=0)
        return float(pen)


def cross_entropy(logits, ids):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    p = nn.softmax(logits)
    b = logits.shape[0]
    loss = -np.mean(np.log(p[np.arange(b), ids] + 1e-12))
    g = p.copy()
    g[np.arange(b), ids] -= 1.0
    return float(loss), g / b


class ConditionalGan:
    """Generator/critic pair plus the training loop."""

    def __init__(self, layout: RowLayout, config: CtganConfig):
        self.layout = layout
        self.config = config
        rng = np.random.default_rng(config.seed)
        k = layout.n_clusters
        self.generator = Generator(config.embedding_dim + k, config.generator_dims,
                                   layout.dim, rng)
        self.discriminator = Discriminator(layout.dim + k, config.discriminator_dims,
                                           config.pac_size, rng, dropout=config.dropout)
        self.rng = rng
        self.history: list[dict] = []

    # the critic sees [row, condition]
    def _critic_rows(self, rows, cond):
        return np.hstack([rows, cond])

    def fit(self, encoded, labels, epochs: int | None = None):
        cfg = self.config
        encoded = np.asarray(encoded, dtype=float)
        labels = np.asarray(labels, dtype=int)
        if encoded.shape[0] != labels.size:
            raise ShapeError("encoded rows and cluster labels are not aligned")
        if encoded.shape[1] != self.layout.dim:
            raise ShapeError(f"encoded width {encoded.shape[1]} != layout {self.layout.dim}")
        k = self.layout.n_clusters
        counts = np.bincount(labels, minlength=k)
        members = [np.flatnonzero(labels == j) for j in range(k)]
        epochs = cfg.epochs if epochs is None else epochs
        rng = self.rng
        G, D = self.generator, self.discriminator
        opt_g = nn.Adam(G.layers, lr=cfg.learning_rate, betas=(0.5, 0.9),
                        weight_decay=cfg.weight_decay)
        opt_d = nn.Adam(D.layers, lr=cfg.learning_rate, betas=(0.5, 0.9),
                        weight_decay=cfg.weight_decay)
        B = cfg.batch_size
        steps = max(encoded.shape[0] // B, 1)
        tau = cfg.gumbel_tau
        for epoch in range(epochs):
            for _ in range(steps):
                # critic step(s)
                for _ in range(cfg.discriminator_steps):
                    ids, cond = sample_condition_vector(counts, rng, size=B)
                    z = rng.standard_normal((B, cfg.embedding_dim))
                    raw, _ = G.forward(np.hstack([z, cond]))
                    fake = activate(raw, self.layout, tau, rng)
                    real_idx = np.array([members[j][rng.integers(members[j].size)] for j in ids])
                    real = encoded[real_idx]
                    D.zero_grad()
                    fake_rows = self._critic_rows(fake, cond)
                    real_rows = self._critic_rows(real, cond)
                    y_fake, cf = D.forward(fake_rows, rng)
                    y_real, cr = D.forward(real_rows, rng)
                    pen = D.gradient_penalty(real_rows, fake_rows, rng, cfg.gp_weight)
                    n = y_real.size
                    loss_d = -(y_real.mean() - y_fake.mean()) + pen
                    D.backward(cr, np.full(n, -1.0 / n))
                    D.backward(cf, np.full(n, 1.0 / n))
                    opt_d.step()

                # generator step
                ids, cond = sample_condition_vector(counts, rng, size=B)
                z = rng.standard_normal((B, cfg.embedding_dim))
                raw, gc = G.forward(np.hstack([z, cond]))
                fake = activate(raw, self.layout, tau, rng)
                D.zero_grad()
                y, cache = D.forward(self._critic_rows(fake, cond), rng)
                cb = self.layout.cluster_block
                ce, dce = cross_entropy(raw[:, cb.start:cb.end], ids)
                loss_g = -y.mean() + ce
                dx = D.backward(cache, np.full(y.size, -1.0 / y.size))
                draw = activate_backward(fake, dx[:, :self.layout.dim], self.layout, tau)
                draw[:, cb.start:cb.end] += dce
                opt_g.zero_grad()
                G.backward(gc, draw)
                opt_g.step()
            if not (np.isfinite(loss_d) and np.isfinite(loss_g)):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch,
                                    diagnostics={"loss_d": float(loss_d),
                                                 "loss_g": float(loss_g),
                                                 "penalty": pen})
            self.history.append({"epoch": epoch, "loss_d": float(loss_d),
                                 "loss_g": float(loss_g), "penalty": pen})
            if epoch % 100 == 0:
                log.debug("epoch %d loss_d=%.4f loss_g=%.4f", epoch, loss_d, loss_g)
        D.zero_grad()
        return self

    def sample_encoded(self, m: int, rng: np.random.Generator, frequencies,
                       condition_sampling: str = "log") -> np.ndarray:
        """Generated rows with categorical blocks hardened to one-hots."""
        k = self.layout.n_clusters
        freq = np.asarray(frequencies, dtype=float)
        if condition_sampling == "empirical":
            p = freq / freq.sum()
            ids = rng.choice(k, size=m, p=p)
            cond = np.eye(k)[ids]
        elif condition_sampling == "log":
            _, cond = sample_condition_vector(freq, rng, size=m)
        else:
            raise ParameterError(f"unknown condition_sampling {condition_sampling!r}")
        z = rng.standard_normal((m, self.config.embedding_dim))
        act = generator_forward(self, z, cond, rng)
        return harden(act, self.layout)

    def get_weights(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, net in (("G", self.generator), ("D", self.discriminator)):
            for i, layer in enumerate(net.layers):
                for name, v in layer.params.items():
                    out[f"{prefix}.{i}.{name}"] = v
                if isinstance(layer, nn.BatchNorm1d):
                    out[f"{prefix}.{i}.running_mean"] = layer.running_mean
                    out[f"{prefix}.{i}.running_var"] = layer.running_var
        return out

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        for prefix, net in (("G", self.generator), ("D", self.discriminator)):
            for i, layer in enumerate(net.layers):
                for name in layer.params:
                    layer.params[name] = np.array(weights[f"{prefix}.{i}.{name}"], dtype=float)
                if isinstance(layer, nn.BatchNorm1d):
                    layer.running_mean = np.array(weights[f"{prefix}.{i}.running_mean"])
                    layer.running_var = np.array(weights[f"{prefix}.{i}.running_var"])
                layer.zero_grad()


def generator_forward(gan: ConditionalGan, noise, condition, rng: np.random.Generator):
    """Inference pass: activated row(s) with running BatchNorm statistics.

    Accepts a single noise/condition vector or a batch of them.
    """
    noise = np.asarray(noise, dtype=float)
    condition = np.asarray(condition, dtype=float)
    single = noise.ndim == 1
    noise, condition = np.atleast_2d(noise), np.atleast_2d(condition)
    if noise.shape[1] != gan.config.embedding_dim or condition.shape[1] != gan.layout.n_clusters:
        raise ShapeError("noise/condition width does not match the model")
    if noise.shape[0] != condition.shape[0]:
        raise ShapeError("noise and condition batch sizes differ")
    raw, _ = gan.generator.forward(np.hstack([noise, condition]), train=False)
    act = activate(raw, gan.layout, gan.config.gumbel_tau, rng)
    return act[0] if single else act


def ctgan_train(encoded, clusters, layout: RowLayout, config: CtganConfig) -> ConditionalGan:
    """Train a conditional GAN on mode-encoded rows conditioned on cluster ids."""
    labels = clusters.labels if hasattr(clusters, "labels") else np.asarray(clusters)
    return ConditionalGan(layout, config).fit(encoded, labels)
