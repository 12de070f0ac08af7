from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import ks_bruteforce
from synthalloc.errors import InsufficientDataError, ShapeError
from synthalloc.validate import correlation_similarity, ks_complement, validation_report

samples = arrays(float, st.integers(1, 25), elements=st.integers(-20, 20).map(float))


def test_ks_identical_disjoint_and_shifted_tail():
    assert ks_complement([3, 1, 2], [1, 2, 3]) == 1.0
    assert ks_complement([0, 0, 0], [1, 1, 1]) == 0.0
    assert ks_complement([1, 2, 3, 4], [1, 2, 3, 10]) == pytest.approx(0.75)
    assert ks_bruteforce([1, 2, 3, 4], [1, 2, 3, 10]) == pytest.approx(0.75)


def test_ks_empty_sample():
    with pytest.raises(InsufficientDataError):
        ks_complement([], [1.0])


@settings(max_examples=100, deadline=None)
@given(samples, samples)
def test_ks_matches_bruteforce_and_is_symmetric(a, b):
    s = ks_complement(a, b)
    assert s == pytest.approx(ks_bruteforce(a, b), abs=1e-12)
    assert s == ks_complement(b, a)
    assert 0.0 <= s <= 1.0


@settings(max_examples=60, deadline=None)
@given(samples, samples)
def test_ks_invariant_under_monotone_map(a, b):
    def f(x):
        return np.exp(x / 10.0) * 3 - 1

    assert ks_complement(f(a), f(b)) == pytest.approx(ks_complement(a, b), abs=1e-12)


def test_correlation_similarity_identical_is_ones(rng):
    A = rng.normal(size=(50, 4))
    assert np.allclose(correlation_similarity(A, A), 1.0)


def test_correlation_similarity_formula_pair():
    t = np.linspace(-1, 1, 1000)
    rng = np.random.default_rng(0)
    noise = rng.standard_normal(1000)
    # construct exact target correlations from two orthogonalized vectors
    u = t / np.linalg.norm(t)
    v = noise - noise.mean() - (noise @ u) * u
    v -= v.mean()
    v /= np.linalg.norm(v)
    A = np.column_stack([u, 0.9 * u + np.sqrt(1 - 0.81) * v])
    B = np.column_stack([u, -0.1 * u + np.sqrt(1 - 0.01) * v])
    sim = correlation_similarity(A, B)
    assert sim[0, 1] == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(np.diag(sim), 1.0) and np.allclose(sim, sim.T)


def test_zero_variance_column_is_undefined(rng):
    A = rng.normal(size=(20, 3))
    A[:, 1] = 4.0
    sim = correlation_similarity(A, rng.normal(size=(30, 3)))
    assert np.isnan(sim[1]).all() and np.isnan(sim[:, 1]).all()
    assert np.isfinite(sim[0, 2])


def test_shape_and_size_checks(rng):
    with pytest.raises(ShapeError):
        correlation_similarity(rng.normal(size=(5, 2)), rng.normal(size=(5, 3)))
    with pytest.raises(InsufficientDataError):
        correlation_similarity(rng.normal(size=(2, 2)), rng.normal(size=(5, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), arrays(float, 3, elements=st.floats(0.1, 10)),
       arrays(float, 3, elements=st.floats(-10, 10)))
def test_correlation_similarity_affine_invariance(seed, scale, shift):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(40, 3)) @ rng.normal(size=(3, 3))
    B = rng.normal(size=(40, 3)) @ rng.normal(size=(3, 3))
    s1 = correlation_similarity(A, B)
    s2 = correlation_similarity(A * scale + shift, B * scale + shift)
    assert np.allclose(s1, s2, atol=1e-9)


def test_shuffled_columns_keep_marginals_but_lose_joints(rng):
    C = np.array([[1, 0.8, 0.6], [0.8, 1, 0.7], [0.6, 0.7, 1]])
    A = rng.multivariate_normal(np.zeros(3), C, size=2000)
    B0 = rng.multivariate_normal(np.zeros(3), C, size=2000)
    B1 = np.column_stack([rng.permutation(B0[:, j]) for j in range(3)])
    r0, r1 = validation_report(A, B0), validation_report(A, B1)
    assert np.array_equal(r0.ks_scores, r1.ks_scores)
    assert r1.mean_ks > 0.95
    assert r1.min_corr_sim < r0.min_corr_sim


def test_report_of_identical_data(rng):
    A = rng.normal(size=(30, 4))
    rep = validation_report(A, A)
    assert rep.mean_ks == 1.0 and rep.min_corr_sim == 1.0 and rep.undefined_pairs == 0


def test_report_files(rng, tmp_path):
    A, B = rng.normal(size=(40, 3)), rng.normal(size=(60, 3))
    validation_report(A, B, ["x", "y", "z"], out_dir=tmp_path, pairplot_rows=10,
                      header="config_hash=abc seed=0")
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["variables"] == ["x", "y", "z"] and doc["provenance"].startswith("config_hash")
    ks_lines = (tmp_path / "ks_scores.csv").read_text().splitlines()
    assert ks_lines[0].startswith("# config_hash") and len(ks_lines) == 5
    pairs = (tmp_path / "pairplot.csv").read_text().splitlines()
    assert len(pairs) == 2 + 3 * 2 * 10     # comment + header + pairs x sources x rows
    assert (tmp_path / "corr_similarity.csv").exists()
    with pytest.raises(ShapeError):
        validation_report(A, B, ["x", "y"])
