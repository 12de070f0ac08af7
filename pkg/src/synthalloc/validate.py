"""Similarity of original vs synthetic data: KS complement and correlation similarity."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, ShapeError


def ks_complement(original, synthetic) -> float:
    """1 - sup_x |F_orig(x) - F_synth(x)|, exact over the merged sample points."""
    a = np.sort(np.asarray(original, dtype=float).ravel())
    b = np.sort(np.asarray(synthetic, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise InsufficientDataError("KS complement needs two nonempty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(1.0 - np.max(np.abs(fa - fb)))


def _pearson(X):
    X = X - X.mean(axis=0)
    sd = np.sqrt((X * X).mean(axis=0))
    ok = sd > 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        c = (X.T @ X) / X.shape[0] / np.outer(sd, sd)
    c[~ok, :] = np.nan
    c[:, ~ok] = np.nan
    return np.clip(c, -1.0, 1.0)


def correlation_similarity(original, synthetic) -> np.ndarray:
    """Entry (i, j) = 1 - |rho_orig - rho_synth|; NaN where a column has no variance."""
    A = np.asarray(original, dtype=float)
    B = np.asarray(synthetic, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ShapeError("original and synthetic must be 2-D with equal column counts")
    if A.shape[0] < 3 or B.shape[0] < 3:
        raise InsufficientDataError("correlation similarity needs at least 3 rows each")
    sim = 1.0 - np.abs(_pearson(A) - _pearson(B))
    d = np.arange(A.shape[1])
    sim[d, d] = np.where(np.isnan(sim[d, d]), np.nan, 1.0)
    return sim


@dataclass(frozen=True)
class ValidationReport:
    variables: tuple[str, ...]
    ks_scores: np.ndarray
    corr_similarity: np.ndarray

    @property
    def mean_ks(self) -> float:
        return float(np.mean(self.ks_scores))

    @property
    def min_corr_sim(self) -> float:
        s = self.corr_similarity
        return float(np.nanmin(s)) if np.any(np.isfinite(s)) else float("nan")

    @property
    def undefined_pairs(self) -> int:
        return int(np.isnan(self.corr_similarity).sum())

    def to_dict(self) -> dict:
        def clean(v):
            return None if not np.isfinite(v) else float(v)
        return {
            "variables": list(self.variables),
            "ks_scores": {v: float(s) for v, s in zip(self.variables, self.ks_scores)},
            "mean_ks": self.mean_ks,
            "min_corr_sim": clean(self.min_corr_sim),
            "undefined_pairs": self.undefined_pairs,
            "corr_similarity": [[clean(v) for v in row] for row in self.corr_similarity],
        }


def validation_report(original, synthetic, variables=None, out_dir=None,
                      pairplot_rows: int = 500, seed: int = 0,
                      header: str | None = None) -> ValidationReport:
    """Score synthetic vs original (sample-major matrices) and optionally write files.

    Files: report.json, ks_scores.csv, corr_similarity.csv and pairplot.csv
    (long format, at most ``pairplot_rows`` rows per source).
    """
    A = np.asarray(original, dtype=float)
    B = np.asarray(synthetic, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ShapeError("original and synthetic must have the same variables")
    names = tuple(variables) if variables is not None else \
        tuple(f"v{i}" for i in range(A.shape[1]))
    if len(names) != A.shape[1]:
        raise ShapeError("variable names do not match column count")
    ks = np.array([ks_complement(A[:, j], B[:, j]) for j in range(A.shape[1])])
    rep = ValidationReport(names, ks, correlation_similarity(A, B))
    if out_dir is not None:
        write_report(rep, A, B, out_dir, pairplot_rows, seed, header)
    return rep


def write_report(rep: ValidationReport, A, B, out_dir, pairplot_rows=500, seed=0,
                 header: str | None = None) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / f for k, f in (("json", "report.json"), ("ks", "ks_scores.csv"),
                                     ("corr", "corr_similarity.csv"),
                                     ("pairs", "pairplot.csv"))}
    doc = rep.to_dict()
    if header:
        doc["provenance"] = header
    paths["json"].write_text(json.dumps(doc, indent=2, sort_keys=True))

    def opened(p):
        f = open(p, "w", newline="")
        if header:
            f.write(f"# {header}\n")
        return f

    with opened(paths["ks"]) as f:
        w = csv.writer(f)
        w.writerow(["variable", "ks_complement"])
        for v, s in zip(rep.variables, rep.ks_scores):
            w.writerow([v, f"{s:.12g}"])
    with opened(paths["corr"]) as f:
        w = csv.writer(f)
        w.writerow(["variable", *rep.variables])
        for v, row in zip(rep.variables, rep.corr_similarity):
            w.writerow([v, *("" if np.isnan(x) else f"{x:.12g}" for x in row)])

    rng = np.random.default_rng(seed)
    ia = rng.choice(A.shape[0], size=min(pairplot_rows, A.shape[0]), replace=False)
    ib = rng.choice(B.shape[0], size=min(pairplot_rows, B.shape[0]), replace=False)
    ia.sort()
    ib.sort()
    with opened(paths["pairs"]) as f:
        w = csv.writer(f)
        w.writerow(["variable_x", "variable_y", "source", "value_x", "value_y"])
        d = len(rep.variables)
        for i in range(d):
            for j in range(i + 1, d):
                for src, M, idx in (("original", A, ia), ("synthetic", B, ib)):
                    for r in idx:
                        w.writerow([rep.variables[i], rep.variables[j], src,
                                    f"{M[r, i]:.10g}", f"{M[r, j]:.10g}"])
    return paths
