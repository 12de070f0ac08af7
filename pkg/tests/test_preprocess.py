from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.metrics import adjusted_rand_score

from synthalloc.errors import InsufficientDataError, ParameterError, ShapeError
from synthalloc.preprocess import (
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
    zscore_fit,
    zscore_fit_apply,
)
from synthalloc.preprocess.vgm import STD_FLOOR

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


# z-score -----------------------------------------------------------------------

def test_zscore_symmetric_pair():
    z, stats = zscore_fit_apply(np.array([[1.0], [3.0]]))
    assert np.array_equal(z[:, 0], [-1.0, 1.0])
    assert stats.stds[0] == 1.0


def test_zscore_constant_column_flagged():
    z, stats = zscore_fit_apply(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]))
    assert np.all(z[:, 0] == 0.0)
    assert stats.degenerate.tolist() == [True, False]


def test_zscore_reapply_is_bitwise_identical():
    X = np.random.default_rng(0).normal(size=(50, 4))
    z, stats = zscore_fit_apply(X)
    assert np.array_equal(stats.apply(X), z)


def test_zscore_needs_two_rows():
    with pytest.raises(InsufficientDataError):
        zscore_fit(np.ones((1, 3)))


def test_zscore_moments():
    X = np.random.default_rng(1).normal(3, 7, size=(200, 5))
    z, _ = zscore_fit_apply(X)
    assert np.abs(z.mean(axis=0)).max() < 1e-10
    assert np.abs(z.std(axis=0) - 1).max() < 1e-10


@settings(max_examples=50, deadline=None)
@given(arrays(float, (12, 3), elements=st.floats(-100, 100)),
       st.floats(0.01, 100), st.floats(-100, 100))
def test_zscore_affine_invariance(X, a, b):
    stats = zscore_fit(X)
    if np.any(stats.stds < 1e-3):
        return
    z1, _ = zscore_fit_apply(X)
    z2, _ = zscore_fit_apply(a * X + b)
    assert np.allclose(z1, z2, atol=1e-8)


# PCA ---------------------------------------------------------------------------

def test_pca_rank_one_direction():
    t = np.random.default_rng(0).normal(size=500)
    X = np.column_stack([t, t])
    model = pca_fit(X)
    v = model.eigenvectors[:, 0]
    assert np.allclose(np.abs(v), [1 / np.sqrt(2)] * 2, atol=1e-10)
    assert model.eigenvalues[1] < 1e-10


def test_pca_isotropic_noise_eigenvalue_ratio():
    X = np.random.default_rng(2).standard_normal((10_000, 6))
    vals = pca_fit(X).eigenvalues
    assert vals.max() / vals.min() < 1.2


def test_pca_transform_of_transform_is_diagonal():
    mix = np.random.default_rng(4).normal(size=(5, 5))
    X = np.random.default_rng(3).normal(size=(400, 5)) @ mix
    Y = pca_transform(pca_fit(X), X)
    Z = pca_transform(pca_fit(Y), Y)
    c = np.cov(Z.T, bias=True)
    assert np.abs(c - np.diag(np.diag(c))).max() < 1e-8


def test_pca_training_transform_covariance_diagonal_and_sorted():
    X = np.random.default_rng(5).normal(size=(300, 4)) @ np.array(
        [[2, 0, 0, 0], [1, 1, 0, 0], [0, 0, 3, 0], [0, 1, 0, 0.5]])
    model = pca_fit(X)
    Y = pca_transform(model, X)
    c = Y.T @ Y / Y.shape[0]
    assert np.abs(c - np.diag(np.diag(c))).max() < 1e-8
    assert np.all(np.diff(model.eigenvalues) <= 0)
    assert np.abs(model.eigenvectors.T @ model.eigenvectors - np.eye(4)).max() < 1e-8


def test_pca_zero_vector_inverts_to_means():
    X = np.random.default_rng(6).normal(5, 2, size=(100, 3))
    model = pca_fit(X)
    assert np.allclose(pca_inverse(model, np.zeros((1, 3)))[0], X.mean(axis=0), atol=1e-12)


def test_pca_dimension_mismatch():
    model = pca_fit(np.random.default_rng(0).normal(size=(20, 3)))
    with pytest.raises(ShapeError):
        pca_transform(model, np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        pca_inverse(model, np.zeros((2, 2)))


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.tuples(st.integers(3, 30), st.integers(1, 6)), elements=finite))
def test_pca_round_trip_identity(X):
    model = pca_fit(X)
    back = pca_inverse(model, pca_transform(model, X))
    assert np.abs(back - X).max() <= 1e-8 * max(1.0, np.abs(X).max())


def test_pca_serialization_round_trip():
    X = np.random.default_rng(7).normal(size=(50, 4))
    model = pca_fit(X)
    again = PcaModel.from_dict(model.to_dict())
    assert np.array_equal(pca_transform(again, X), pca_transform(model, X))


# t-SNE -------------------------------------------------------------------------

def _two_clouds(n=100, sep=20.0, d=5, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, d))
    b = rng.standard_normal((n, d))
    b[:, 0] += sep
    X = np.vstack([a, b])
    centres = np.vstack([a.mean(0) * 0, np.eye(d)[0] * sep])
    truth = np.argmin(((X[:, None, :] - centres[None]) ** 2).sum(-1), axis=1)
    return X, truth


def test_tsne_separates_distant_clouds():
    X, truth = _two_clouds()
    Y = tsne_embed(X, perplexity=30, seed=0)
    # linear separability: best threshold along the direction joining the centroids
    c0, c1 = Y[truth == 0].mean(0), Y[truth == 1].mean(0)
    proj = Y @ (c1 - c0)
    best = max(np.mean((proj > t) == (truth == 1)) for t in np.sort(proj))
    assert best >= 0.99


def test_tsne_kl_decreases_and_finite():
    X, _ = _two_clouds(n=60, seed=1)
    Y, (kl0, kl1) = tsne_embed(X, perplexity=10, seed=3, n_iter=300, return_kl=True)
    assert np.all(np.isfinite(Y))
    assert kl1 <= kl0


def test_tsne_three_points_distinct():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 5.0]])
    Y = tsne_embed(X, perplexity=1.0, seed=0, n_iter=200)
    d = np.sqrt(((Y[:, None] - Y[None]) ** 2).sum(-1))
    assert d[np.triu_indices(3, 1)].min() > 0


def test_tsne_deterministic_per_seed():
    X, _ = _two_clouds(n=40, seed=2)
    a = tsne_embed(X, perplexity=10, seed=5, n_iter=100)
    b = tsne_embed(X, perplexity=10, seed=5, n_iter=100)
    assert np.array_equal(a, b)


def test_tsne_perplexity_too_large():
    with pytest.raises(ParameterError):
        tsne_embed(np.random.default_rng(0).normal(size=(20, 3)), perplexity=10)
    with pytest.raises(ParameterError):
        tsne_embed(np.random.default_rng(0).normal(size=(20, 3)), perplexity=0.5)


# HDBSCAN -----------------------------------------------------------------------

def test_hdbscan_two_blobs():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((200, 2))
    b = rng.standard_normal((200, 2)) + [10.0, 0.0]
    truth = np.repeat([0, 1], 200)
    lab = hdbscan_cluster(np.vstack([a, b]), min_cluster_size=15)
    assert lab.k == 2
    assert adjusted_rand_score(truth, lab.labels) >= 0.99


def test_hdbscan_single_blob():
    emb = np.random.default_rng(1).standard_normal((300, 2))
    assert hdbscan_cluster(emb, 15).k == 1


def test_hdbscan_ring_and_dense_centre():
    rng = np.random.default_rng(2)
    th = rng.uniform(0, 2 * np.pi, 300)
    ring = np.column_stack([np.cos(th), np.sin(th)]) * 10 + rng.normal(0, 0.8, (300, 2))
    centre = rng.normal(0, 0.3, (150, 2))
    lab = hdbscan_cluster(np.vstack([ring, centre]), 15)
    centre_labels = lab.labels[300:]
    assert np.unique(centre_labels).size == 1
    # the centre is its own cluster, not merged with the whole ring
    assert np.mean(lab.labels[:300] == centre_labels[0]) < 0.5


def test_hdbscan_partition_and_noise_reassignment():
    rng = np.random.default_rng(3)
    emb = np.vstack([rng.standard_normal((100, 2)), rng.standard_normal((100, 2)) + 8,
                     rng.uniform(-20, 30, (10, 2))])
    lab = hdbscan_cluster(emb, 15)
    assert lab.labels.min() == 0 and lab.labels.max() == lab.k - 1
    assert lab.counts.sum() == emb.shape[0]
    assert lab.noise_reassigned >= 1
    assert ClusterLabels.from_dict(lab.to_dict()).labels.tolist() == lab.labels.tolist()


def test_hdbscan_too_few_points():
    with pytest.raises(ParameterError):
        hdbscan_cluster(np.zeros((5, 2)), 15)


# VGM ---------------------------------------------------------------------------

def test_vgm_single_gaussian_one_mode():
    x = np.random.default_rng(0).normal(5, 1, 5000)
    m = vgm_fit_column(x, max_modes=10, prune_weight=0.005)
    assert m.n_modes == 1
    assert abs(m.means[0] - x.mean()) <= 0.1
    assert abs(m.means[0] - 5) <= 0.1


def test_vgm_bimodal_two_modes():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.normal(-10, 1, 2500), rng.normal(10, 1, 2500)])
    m = vgm_fit_column(x)
    assert m.n_modes == 2
    assert np.allclose(np.sort(m.means), [-10, 10], atol=0.3)


def test_vgm_constant_column_floor():
    m = vgm_fit_column(np.full(100, 3.0))
    assert m.n_modes == 1
    assert m.stds[0] == STD_FLOOR
    assert m.means[0] == pytest.approx(3.0, abs=1e-12)


def test_vgm_invariants():
    rng = np.random.default_rng(2)
    x = np.concatenate([rng.normal(0, 1, 300), rng.normal(6, 0.5, 200), rng.normal(-5, 2, 100)])
    m = vgm_fit_column(x, prune_weight=0.005)
    assert abs(m.weights.sum() - 1) < 1e-12
    assert np.all(m.weights >= 0.005 - 1e-15) and np.all(m.stds > 0)
    assert VgmColumnModel.from_dict(m.to_dict()).means.tolist() == m.means.tolist()


def test_vgm_too_few_values():
    with pytest.raises(ParameterError):
        vgm_fit_column(np.arange(10.0), max_modes=10)


def test_mode_transform_centre_and_boundary():
    m = VgmColumnModel(np.array([0.0, 10.0]), np.array([1.0, 0.5]), np.array([0.5, 0.5]),
                       np.array([0, 1]))
    a, oh = mode_transform(m, 10.0)
    assert a == 0.0 and oh.tolist() == [0.0, 1.0]
    a, oh = mode_transform(m, 4.0)
    assert a == 1.0 and oh.tolist() == [1.0, 0.0]
    a, _ = mode_transform(m, 100.0)
    assert a == 1.0  # clipped tail


def test_mode_round_trip_in_range():
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.normal(-3, 1, 500), rng.normal(4, 0.7, 500)])
    m = vgm_fit_column(x)
    a, oh = mode_transform(m, x)
    assert np.all(np.abs(a) <= 1)
    assert np.all(oh.sum(axis=1) == 1) and set(np.unique(oh)) <= {0.0, 1.0}
    assert np.abs(mode_inverse(m, a, oh) - x).max() < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_mode_round_trip_unclipped_values(seed):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(-2, 1, 150), rng.normal(3, 0.5, 150)])
    m = vgm_fit_column(x, cover=False)
    probe = rng.uniform(x.min(), x.max(), 1000)
    a, oh = mode_transform(m, probe)
    ok = np.abs(a) < 1
    assert np.abs(mode_inverse(m, a[ok], oh[ok]) - probe[ok]).max() < 1e-8
