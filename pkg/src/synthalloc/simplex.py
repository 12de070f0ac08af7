"""Dense two-phase revised simplex for small LPs in standard form.

    minimize c^T x  subject to  A x = b,  x >= 0

The basis inverse is kept explicitly and updated with a rank-one pivot,
refactorized from scratch every ``refactor_every`` pivots. Pricing is Dantzig
(most negative reduced cost); after a run of degenerate pivots it falls back
to Bland's rule until the objective moves again, which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL = "numerical_failure"
PIVOT_TOL = 1e-7


@dataclass
class LpResult:
    status: str
    x: np.ndarray
    objective: float
    iterations: int
    basis: np.ndarray

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Basis bookkeeping shared by both phases."""

    def __init__(self, A, b, basis, refactor_every, tol):
        self.A = A
        self.b = b
        self.basis = np.asarray(basis, dtype=int)
        self.refactor_every = refactor_every
        self.tol = tol
        self.pivots = 0
        self.refactor()

    def refactor(self):
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self.xB = self.Binv @ self.b
        self.xB[np.abs(self.xB) < self.tol] = 0.0
        self.since = 0

    def pivot(self, r, q, u):
        piv = u[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(u, row)
        self.Binv[r] = row
        theta = self.xB[r] / piv
        self.xB -= theta * u
        self.xB[r] = theta
        self.basis[r] = q
        self.pivots += 1
        self.since += 1
        if self.since >= self.refactor_every:
            self.refactor()

    def run(self, cost, allowed, max_iter, degenerate_limit=30):
        """Iterate to optimality for ``cost``; returns a status string."""
        tol = self.tol
        A = self.A
        degenerate = 0
        bland = False
        for _ in range(max_iter):
            y = cost[self.basis] @ self.Binv
            d = cost - y @ A
            d[self.basis] = 0.0
            d[~allowed] = 0.0
            if bland:
                cand = np.flatnonzero(d < -tol)
                if cand.size == 0:
                    return OPTIMAL
                q = int(cand[0])
            else:
                q = int(np.argmin(d))
                if d[q] >= -tol:
                    return OPTIMAL
            u = self.Binv @ A[:, q]
            pos = u > PIVOT_TOL
            if not pos.any():
                return UNBOUNDED
            xb = np.maximum(self.xB, 0.0)
            ratios = np.full(u.size, np.inf)
            ratios[pos] = xb[pos] / u[pos]
            if bland:
                theta = ratios.min()
                ties = np.flatnonzero(ratios <= theta + tol)
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                # Harris two-pass: relax the bound slightly, then take the
                # largest pivot among rows that block within the relaxed step
                relaxed = (xb[pos] + tol) / u[pos]
                ties = np.flatnonzero(ratios <= relaxed.min())
                r = int(ties[np.argmax(u[ties])])
                theta = ratios[r]
            if theta <= tol:
                degenerate += 1
                bland = bland or degenerate >= degenerate_limit
            else:
                degenerate = 0
                bland = False
            self.pivot(r, q, u)
        return ITERATION_LIMIT


def _crash_basis(A, b):
    """One unit column per row where available; ``None`` marks rows needing an artificial."""
    m = A.shape[0]
    nz = (A != 0).sum(axis=0)
    basis: list[int | None] = [None] * m
    for j in np.flatnonzero(nz == 1):
        i = int(np.flatnonzero(A[:, j])[0])
        if basis[i] is None and A[i, j] > 0:
            basis[i] = int(j)
    return basis


def solve_lp(c, A, b, max_iter: int | None = None, tol: float = 1e-9,
             refactor_every: int = 50, basis=None, artificial=None) -> LpResult:
    """Solve ``min c^T x, A x = b, x >= 0`` with the two-phase revised simplex.

    Without ``basis`` a crash basis of unit columns is completed with
    artificial variables. A caller that knows a better start passes ``basis``
    (one column per row, primal feasible) and lists in ``artificial`` any of
    its columns that must be driven to zero in phase 1 and kept out afterwards.
    """
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    max_iter = max_iter or 50 * (m + n)

    if basis is None:
        neg = b < 0
        A[neg] *= -1
        b[neg] *= -1
        crash = _crash_basis(A, b)
        need = [i for i, j in enumerate(crash) if j is None]
        art_cols = np.arange(n, n + len(need))
        if need:
            art = np.zeros((m, len(need)))
            art[need, np.arange(len(need))] = 1.0
            A = np.hstack([A, art])
        basis = np.array([j if j is not None else n + need.index(i)
                          for i, j in enumerate(crash)], dtype=int)
    else:
        basis = np.array(basis, dtype=int)
        if basis.shape != (m,):
            raise ValueError("initial basis needs one column per row")
        art_cols = np.asarray(artificial if artificial is not None else [], dtype=int)

    N = A.shape[1]
    tab = _Tableau(A, b, basis, refactor_every, tol)
    if np.any(tab.xB < -1e-7 * max(1.0, np.abs(b).max())):
        raise ValueError("initial basis is not primal feasible")
    allowed = np.ones(N, dtype=bool)
    is_art = np.zeros(N, dtype=bool)
    is_art[art_cols] = True
    used = 0
    if art_cols.size:
        cost1 = is_art.astype(float)
        status = tab.run(cost1, allowed, max_iter)
        used = tab.pivots
        tab.refactor()
        infeas = float(cost1[tab.basis] @ np.maximum(tab.xB, 0.0))
        if status == ITERATION_LIMIT:
            return _result(ITERATION_LIMIT, tab, n, c, used)
        if status == UNBOUNDED:  # cannot happen in exact arithmetic
            return _result(NUMERICAL, tab, n, c, used)
        if infeas > 10 * tol * max(1.0, np.abs(b).max()):
            return _result(INFEASIBLE, tab, n, c, used)
        # drive zero-level artificials out of the basis where possible
        for r in np.flatnonzero(is_art[tab.basis]):
            row = tab.Binv[r] @ A
            cand = np.flatnonzero((np.abs(row) > PIVOT_TOL) & ~is_art)
            cand = cand[~np.isin(cand, tab.basis)]
            if cand.size:
                q = int(cand[np.argmax(np.abs(row[cand]))])
                tab.pivot(r, q, tab.Binv @ A[:, q])
        allowed[is_art] = False

    cost2 = np.zeros(N)
    cost2[:n] = c
    status = tab.run(cost2, allowed, max(max_iter - used, 1))
    tab.refactor()
    return _result(status, tab, n, c, tab.pivots)


def _result(status, tab, n, c, iterations):
    x = np.zeros(tab.A.shape[1])
    x[tab.basis] = np.maximum(tab.xB, 0.0)
    x = x[:n]
    return LpResult(status, x, float(c @ x), int(iterations), tab.basis.copy())
