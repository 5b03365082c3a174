"""
Dense two-phase simplex for small linear programs.

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                x >= 0

Entering columns are picked by the most negative reduced cost. After a
run of degenerate pivots the solver falls back to Bland's rule, which
cannot cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-7


class SimplexError(RuntimeError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    status: str  # "optimal", "infeasible", "unbounded", "iteration_limit"
    nit: int

    @property
    def success(self) -> bool:
        return self.status == "optimal"


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])


class _Tableau:
    def __init__(self, T, basis, tol, max_iter):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.max_iter = max_iter
        self.nit = 0

    def _entering(self, ncols: int, bland: bool) -> int:
        d = self.T[-1, :ncols]
        if bland:
            idx = np.flatnonzero(d < -self.tol)
            return int(idx[0]) if idx.size else -1
        j = int(np.argmin(d))
        return j if d[j] < -self.tol else -1

    def _leaving(self, col: int) -> int:
        a = self.T[:-1, col]
        rhs = self.T[:-1, -1]
        rows = np.flatnonzero(a > self.tol)
        if rows.size == 0:
            return -1
        ratios = rhs[rows] / a[rows]
        best = ratios.min()
        tied = rows[ratios <= best + self.tol * max(1.0, abs(best))]
        # smallest basic variable index among ties (Bland)
        return int(min(tied, key=lambda r: self.basis[r]))

    def run(self, ncols: int) -> str:
        degenerate = 0
        while True:
            if self.nit >= self.max_iter:
                return "iteration_limit"
            col = self._entering(ncols, bland=degenerate > 20)
            if col < 0:
                return "optimal"
            row = self._leaving(col)
            if row < 0:
                return "unbounded"
            if self.T[row, -1] <= self.tol:
                degenerate += 1
            else:
                degenerate = 0
            _pivot(self.T, row, col)
            self.basis[row] = col
            self.nit += 1


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, tol: float = TOL,
            max_iter: int = 50_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    if A_ub.shape != (b_ub.size, n) or A_eq.shape != (b_eq.size, n):
        raise ValueError("constraint shapes do not match the cost vector")

    m_ub, m_eq = b_ub.size, b_eq.size
    m = m_ub + m_eq
    flip_ub = b_ub < 0
    n_surplus = int(flip_ub.sum())
    n_art = n_surplus + m_eq
    n_slack = m_ub
    width = n + n_slack + n_art
    art0 = n + n_slack

    T = np.zeros((m + 1, width + 1))
    basis = np.empty(m, dtype=int)
    a = 0
    for i in range(m_ub):
        sign = -1.0 if flip_ub[i] else 1.0
        T[i, :n] = sign * A_ub[i]
        T[i, n + i] = sign  # slack, or surplus once the row is negated
        T[i, -1] = sign * b_ub[i]
        if flip_ub[i]:
            T[i, art0 + a] = 1.0
            basis[i] = art0 + a
            a += 1
        else:
            basis[i] = n + i
    for i in range(m_eq):
        r = m_ub + i
        sign = -1.0 if b_eq[i] < 0 else 1.0
        T[r, :n] = sign * A_eq[i]
        T[r, -1] = sign * b_eq[i]
        T[r, art0 + a] = 1.0
        basis[r] = art0 + a
        a += 1

    tab = _Tableau(T, basis, tol, max_iter)

    if n_art:
        # phase 1: minimise the sum of artificials
        T[-1, :] = 0.0
        T[-1, art0:width] = 1.0
        for r in range(m):
            if basis[r] >= art0:
                T[-1] -= T[r]
        status = tab.run(width)
        if status != "optimal":
            return LPResult(np.full(n, np.nan), np.nan, status, tab.nit)
        if -T[-1, -1] > tol * max(1.0, np.abs(T[:-1, -1]).max(initial=0.0)) * 10:
            return LPResult(np.full(n, np.nan), np.nan, "infeasible", tab.nit)
        # drive zero-level artificials out of the basis, drop redundant rows
        keep = np.ones(m + 1, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= art0:
                cand = np.flatnonzero(np.abs(tab.T[r, :art0]) > tol)
                if cand.size:
                    _pivot(tab.T, r, int(cand[0]))
                    tab.basis[r] = int(cand[0])
                else:
                    keep[r] = False
        tab.T = np.delete(tab.T[keep], np.s_[art0:width], axis=1)
        tab.basis = tab.basis[keep[:-1]]

    T = tab.T
    cost = np.zeros(T.shape[1] - 1)
    cost[:n] = c
    T[-1, :-1] = cost
    T[-1, -1] = 0.0
    for r, j in enumerate(tab.basis):
        if cost[j] != 0.0:
            T[-1] -= cost[j] * T[r]
    status = tab.run(art0)

    x = np.zeros(T.shape[1] - 1)
    x[tab.basis] = T[:-1, -1]
    x = np.maximum(x[:n], 0.0)
    if status != "optimal":
        return LPResult(x, np.nan, status, tab.nit)
    return LPResult(x, float(c @ x), status, tab.nit)
