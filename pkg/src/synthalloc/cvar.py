"""Scenario densities, empirical portfolio statistics and the CVaR-constrained LP.

Losses are ``L_j = -(R^T x)_j``; the LP caps the CVaR of losses:

    max  sum_j pi_j (R^T x)_j
    s.t. xi + 1/(1-alpha) sum_j pi_j z_j <= lam
         z_j >= L_j - xi,  z >= 0,  sum x = 1,  x >= 0,  xi free
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ParameterError, ShapeError
from .preprocess.normalize import NormalizationStats
from .simplex import INFEASIBLE, OPTIMAL, LpResult, solve_lp

DISTANCE_FLOOR = 1e-9


@dataclass(frozen=True)
class DensityVector:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ParameterError("density weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-10:
            raise ParameterError(f"density weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.weights.size


def uniform_density(m: int) -> DensityVector:
    if m < 1:
        raise ParameterError("uniform density needs m >= 1")
    return DensityVector(np.full(m, 1.0 / m))


def feature_distance(f1, f2) -> float:
    a = np.asarray(f1, dtype=float).ravel()
    b = np.asarray(f2, dtype=float).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"feature vectors differ in length: {a.size} vs {b.size}")
    return float(np.linalg.norm(a - b))


def density_from_features(F, f, stats: NormalizationStats | None = None,
                          eps: float = DISTANCE_FLOOR) -> DensityVector:
    """Inverse-distance weights of scenario features ``F`` (l x m) around ``f``.

    Both are normalized with ``stats`` first when given.
    """
    F = np.asarray(F, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    if F.ndim != 2 or F.shape[1] == 0:
        raise ShapeError("F must be a nonempty (l, m) matrix")
    if F.shape[0] != f.size:
        raise ShapeError(f"present-day vector has {f.size} features, scenarios have {F.shape[0]}")
    S = F.T
    if stats is not None:
        S = stats.apply(S)
        f = stats.apply(f[None, :])[0]
    d = np.sqrt(((S - f) ** 2).sum(axis=1))
    inv = 1.0 / np.maximum(d, eps)
    w = inv / inv.sum()
    return DensityVector(w / w.sum())


@dataclass(frozen=True)
class RiskSpec:
    alpha: float = 0.95
    lam: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError("alpha must lie in (0, 1)")
        if not self.lam > 0.0:
            raise ParameterError("lambda must be positive")


def _weights(density, m) -> np.ndarray:
    if density is None:
        return np.full(m, 1.0 / m)
    w = density.weights if isinstance(density, DensityVector) else np.asarray(density, float)
    if w.size != m:
        raise ShapeError(f"density has {w.size} entries for {m} scenarios")
    return w


def expected_return(R, x, density=None) -> float:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return float(_weights(density, R.shape[1]) @ (R.T @ np.asarray(x, dtype=float)))


def tail_mean(losses, weights, alpha: float) -> float:
    """Mean of the worst ``1 - alpha`` probability mass of ``losses``."""
    L = np.asarray(losses, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    beta = 1.0 - alpha
    order = np.argsort(-L, kind="stable")
    L, w = L[order], w[order]
    before = np.concatenate([[0.0], np.cumsum(w)[:-1]])
    take = np.clip(np.minimum(w, beta - before), 0.0, None)
    return float(take @ L / beta)


def empirical_cvar(R, x, density=None, alpha: float = 0.95) -> float:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not 0.0 < alpha < 1.0:
        raise ParameterError("alpha must lie in (0, 1)")
    return tail_mean(-(R.T @ np.asarray(x, dtype=float)), _weights(density, R.shape[1]), alpha)


@dataclass
class Allocation:
    x: np.ndarray
    xi: float
    z: np.ndarray
    objective: float
    cvar: float
    cvar_constraint_active: bool
    status: str
    iterations: int = 0
    min_cvar: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL

    def to_dict(self, tickers=None) -> dict:
        names = list(tickers) if tickers is not None else [f"asset{i}" for i in range(self.x.size)]
        return {"status": self.status, "weights": dict(zip(names, map(float, self.x))),
                "xi": float(self.xi), "objective": float(self.objective),
                "empirical_cvar": float(self.cvar),
                "cvar_constraint_active": bool(self.cvar_constraint_active),
                "iterations": self.iterations, "min_cvar": self.min_cvar}


LpSolver = Callable[[np.ndarray, np.ndarray, np.ndarray], LpResult]


def build_cvar_lp(R, pi, alpha: float, lam: float | None):
    """Standard-form matrices for the allocation LP (or the min-CVaR LP if ``lam`` is None).

    Column order: x (n), xi+, xi-, z (m), t (m tail surplus) and, when ``lam``
    is given, the CVaR-row slack s.
    """
    n, m = R.shape
    k = 1.0 / (1.0 - alpha)
    n_cols = n + 2 + 2 * m + (0 if lam is None else 1)
    rows = m + 1 + (0 if lam is None else 1)
    A = np.zeros((rows, n_cols))
    b = np.zeros(rows)
    ix, ixp, ixm = slice(0, n), n, n + 1
    iz = slice(n + 2, n + 2 + m)
    it = slice(n + 2 + m, n + 2 + 2 * m)
    # tail rows: -(R^T x) - xi - z + t = 0   (t = z + xi - L >= 0)
    A[:m, ix] = -R.T
    A[:m, ixp] = -1.0
    A[:m, ixm] = 1.0
    A[:m, iz] = -np.eye(m)
    A[:m, it] = np.eye(m)
    # budget
    A[m, ix] = 1.0
    b[m] = 1.0
    c = np.zeros(n_cols)
    if lam is None:
        c[ixp], c[ixm] = 1.0, -1.0
        c[iz] = k * pi
    else:
        A[m + 1, ixp], A[m + 1, ixm] = 1.0, -1.0
        A[m + 1, iz] = k * pi
        A[m + 1, -1] = 1.0
        b[m + 1] = lam
        c[ix] = -(R @ pi)
    return c, A, b


def _crash(R, pi, alpha: float, lam: float | None):
    """Feasible starting basis for :func:`build_cvar_lp` plus an optional artificial.

    Start from the single asset with the smallest CVaR, with xi at its VaR:
    rows above the VaR carry z_j, rows below carry t_j, the boundary row
    carries xi. The CVaR row is then satisfied exactly when that asset's CVaR
    fits the budget; otherwise its slack is replaced by an excess artificial.
    """
    n, m = R.shape
    cvars = [tail_mean(-R[i], pi, alpha) for i in range(n)]
    i = int(np.argmin(cvars))
    L = -R[i]
    jstar = _var_index(L, pi, alpha)
    xi = L[jstar]
    iz, it = n + 2, n + 2 + m
    basis = np.where(L > xi, iz + np.arange(m), it + np.arange(m))
    basis[jstar] = n if xi >= 0 else n + 1
    basis = np.append(basis, i)
    if lam is None:
        return basis, None
    if cvars[i] <= lam:
        return np.append(basis, n + 2 + 2 * m), None
    # excess artificial: CVaR row becomes  ... + s - a = lam  with a basic
    return np.append(basis, n + 3 + 2 * m), n + 3 + 2 * m


def _solve_builtin(R, pi, alpha, lam):
    c, A, b = build_cvar_lp(R, pi, alpha, lam)
    basis, art = _crash(R, pi, alpha, lam)
    if art is not None:
        col = np.zeros((A.shape[0], 1))
        col[-1, 0] = -1.0
        A = np.hstack([A, col])
        c = np.append(c, 0.0)
        res = solve_lp(c, A, b, basis=basis, artificial=[art])
        res.x = res.x[:-1]
        return res
    return solve_lp(c, A, b, basis=basis)


def _var_index(L, pi, alpha: float) -> int:
    """Scenario at the VaR boundary: the worst-first cumulative mass reaches 1 - alpha."""
    order = np.argsort(-L, kind="stable")
    cum = np.cumsum(pi[order])
    return int(order[min(int(np.searchsorted(cum, 1.0 - alpha - 1e-15)), L.size - 1)])


def _slack_budget(R, pi, alpha: float, lam: float) -> Allocation | None:
    """All weight on the best-mean asset (lowest index on ties) if its CVaR fits.

    A linear objective over the simplex peaks at that vertex, so when the risk
    budget does not bind the LP is unnecessary and the tie-break is explicit.
    """
    mu = R @ pi
    i = int(np.flatnonzero(mu >= mu.max() - 1e-12 * max(1.0, abs(mu.max())))[0])
    L = -R[i]
    cvar = tail_mean(L, pi, alpha)
    if cvar > lam:
        return None
    x = np.zeros(R.shape[0])
    x[i] = 1.0
    xi = float(L[_var_index(L, pi, alpha)])
    return Allocation(x, xi, np.maximum(L - xi, 0.0), float(mu[i]), cvar,
                      cvar >= lam - 1e-7, OPTIMAL, 0)


def _unpack(res: LpResult, R, pi, alpha, lam):
    n, m = R.shape
    x = np.clip(res.x[:n], 0.0, None)
    x = x / x.sum() if x.sum() > 0 else np.full(n, 1.0 / n)
    xi = res.x[n] - res.x[n + 1]
    z = res.x[n + 2:n + 2 + m]
    cvar = empirical_cvar(R, x, pi, alpha)
    active = lam is not None and cvar >= lam - 1e-7
    return x, xi, z, cvar, active


def min_cvar_allocation(R, density=None, alpha: float = 0.95,
                        solver: LpSolver | None = None) -> Allocation:
    """Portfolio with the smallest achievable empirical CVaR."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    pi = _weights(density, R.shape[1])
    res = solver(*build_cvar_lp(R, pi, alpha, None)) if solver else \
        _solve_builtin(R, pi, alpha, None)
    x, xi, z, cvar, _ = _unpack(res, R, pi, alpha, None)
    return Allocation(x, xi, z, expected_return(R, x, pi), cvar, False, res.status,
                      res.iterations, min_cvar=cvar)


def solve_allocation(R, density=None, risk: RiskSpec | None = None,
                     solver: LpSolver | None = None) -> Allocation:
    """Maximize expected return subject to empirical CVaR <= lambda, long-only, fully invested.

    ``solver`` takes ``(c, A, b)`` for ``min c^T v, A v = b, v >= 0`` and returns an
    ``LpResult``; the built-in dense simplex is used by default, after a check
    for the case where the best-mean asset alone already fits the budget. When the risk
    budget is infeasible the minimum-CVaR portfolio is returned with status
    ``infeasible`` and its CVaR in ``min_cvar``.
    """
    risk = risk or RiskSpec()
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not np.all(np.isfinite(R)):
        raise ParameterError("scenario returns must be finite")
    pi = _weights(density, R.shape[1])
    if solver is not None:
        res = solver(*build_cvar_lp(R, pi, risk.alpha, risk.lam))
    else:
        quick = _slack_budget(R, pi, risk.alpha, risk.lam)
        if quick is not None:
            return quick
        res = _solve_builtin(R, pi, risk.alpha, risk.lam)
    if res.status == INFEASIBLE:
        diag = min_cvar_allocation(R, pi, risk.alpha, solver)
        diag.status = INFEASIBLE
        diag.iterations += res.iterations
        return diag
    x, xi, z, cvar, active = _unpack(res, R, pi, risk.alpha, risk.lam)
    return Allocation(x, xi, z, expected_return(R, x, pi), cvar, active, res.status,
                      res.iterations)
