"""Bounded-variable revised simplex and Gomory cut rounds.

Problems are ``min c x`` subject to ``A x (<=|=|>=) b`` and ``lb <= x <= ub``.
Internally every row gets a logical column, ``A x + s = b``, whose bounds
encode the row sense. The basis matrix is factorised with SuperLU and kept
current between refactorisations with product-form eta updates.

The dual simplex does most of the work: an all-logical basis with every
structural at its cheaper bound is dual feasible for the problems built by
:mod:`banopt.model`, and bound changes or added cuts keep a previous optimal
basis dual feasible, which is what warm starts rely on. The primal simplex
cleans up the (rare) dual infeasibilities left at the end.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

BASIC, AT_LB, AT_UB, FREE = 0, 1, 2, 3

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
BLAND_AFTER = 1000
REFACTOR_EVERY = 64
BOX = 1e7


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpNumericalError(RuntimeError):
    """The simplex could not finish (cycling guard or singular basis)."""


class LpTimeout(RuntimeError):
    pass


@dataclass
class LpProblem:
    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray | None = None
    obj_scale: float = 1.0
    row_names: list[str] | None = None
    n_cuts: int = 0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        if self.A.shape[1] != len(self.c) and self.A.shape[0] == 0:
            self.A = sp.csr_matrix((0, len(self.c)))
        self.sense = np.asarray(self.sense, dtype="<U1").reshape(-1)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.integer is None:
            self.integer = np.zeros(len(self.c), dtype=bool)
        m, n = self.A.shape
        if not (len(self.c) == len(self.lb) == len(self.ub) == len(self.integer) == n):
            raise ValueError("objective, bounds and columns disagree in length")
        if not (len(self.sense) == len(self.b) == m):
            raise ValueError("row senses, right-hand sides and rows disagree in length")
        if not set(self.sense) <= {"L", "E", "G"}:
            raise ValueError(f"unknown row sense in {set(self.sense)}")

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "LpProblem":
        return replace(self, lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float))

    def add_rows(self, rows, sense, b, names=None, cuts: bool = False) -> "LpProblem":
        rows = sp.csr_matrix(rows, shape=(len(b), self.n))
        extra = list(names) if names is not None else [f"row{self.m + i}" for i in range(len(b))]
        return replace(
            self, A=sp.vstack([self.A, rows], format="csr"),
            sense=np.concatenate([self.sense, np.asarray(sense, dtype="<U1")]),
            b=np.concatenate([self.b, np.asarray(b, dtype=float)]),
            row_names=(self.row_names or [f"row{i}" for i in range(self.m)]) + extra,
            n_cuts=self.n_cuts + (len(b) if cuts else 0))

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def max_violation(self, x: np.ndarray) -> float:
        """Largest row or bound violation of ``x``."""
        ax = self.A @ x
        viol = np.zeros(self.m)
        le, ge, eq = self.sense == "L", self.sense == "G", self.sense == "E"
        viol[le] = ax[le] - self.b[le]
        viol[ge] = self.b[ge] - ax[ge]
        viol[eq] = np.abs(ax[eq] - self.b[eq])
        bnd = np.maximum(self.lb - x, x - self.ub)
        return float(max(viol.max(initial=0.0), bnd.max(initial=0.0)))


@dataclass
class Basis:
    """Snapshot of a simplex basis: basic column per row and column states."""

    head: np.ndarray
    status: np.ndarray
    values: np.ndarray

    def copy(self) -> "Basis":
        return Basis(self.head.copy(), self.status.copy(), self.values.copy())


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    basis: Basis | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    bound_history: list[float] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class SimplexSolver:
    """One solve at a time; the factorisation of the last optimal basis is
    kept so :meth:`tableau_row` can feed cut generation."""

    def __init__(self, feas_tol: float = FEAS_TOL, opt_tol: float = OPT_TOL,
                 pivot_tol: float = PIVOT_TOL, bland_after: int = BLAND_AFTER,
                 refactor_every: int = REFACTOR_EVERY, max_iter: int | None = None):
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.pivot_tol = pivot_tol
        self.bland_after = bland_after
        self.refactor_every = refactor_every
        self.max_iter = max_iter
        self.problem: LpProblem | None = None

    # ------------------------------------------------------------------ setup
    def _setup(self, p: LpProblem):
        self.problem = p
        m, n = p.m, p.n
        self.m, self.n = m, n
        Af = sp.hstack([p.A.tocsc(), sp.identity(m, format="csc")], format="csc")
        Af.sort_indices()
        self.Af = Af
        self.AfT = Af.T.tocsr()
        self.cost = np.concatenate([p.c, np.zeros(m)])
        slo = np.where(p.sense == "G", -np.inf, 0.0)
        sup = np.where(p.sense == "L", np.inf, 0.0)
        self.lo = np.concatenate([p.lb, slo])
        self.up = np.concatenate([p.ub, sup])
        self.true_lo = self.lo.copy()
        self.true_up = self.up.copy()
        self.b = p.b
        self.boxed = np.zeros(n + m, dtype=bool)
        self.iterations = 0
        self.bland = False
        self.degenerate_run = 0

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        Af = self.Af
        lo, hi = Af.indptr[j], Af.indptr[j + 1]
        col[Af.indices[lo:hi]] = Af.data[lo:hi]
        return col

    def _factor(self):
        B = self.Af[:, self.head]
        try:
            self.lu = spla.splu(B.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise LpNumericalError(f"singular basis ({exc})") from None
        self.etas: list[tuple[int, np.ndarray]] = []

    def _ftran(self, v: np.ndarray) -> np.ndarray:
        w = self.lu.solve(v)
        for r, alpha in self.etas:
            wr = w[r] / alpha[r]
            w -= wr * alpha
            w[r] = wr
        return w

    def _btran(self, v: np.ndarray) -> np.ndarray:
        v = v.copy()
        for r, alpha in reversed(self.etas):
            v[r] = (v[r] - (alpha @ v - alpha[r] * v[r])) / alpha[r]
        return self.lu.solve(v, trans="T")

    def _recompute_basics(self):
        xn = self.x.copy()
        xn[self.head] = 0.0
        rhs = self.b - self.Af @ xn
        self.x[self.head] = self._ftran(rhs)

    def _duals(self):
        y = self._btran(self.cost[self.head])
        d = self.cost - self.AfT @ y
        d[self.head] = 0.0
        return y, d

    # --------------------------------------------------------------- starting
    def _cold_start(self):
        n, m = self.n, self.m
        self.lo = self.true_lo.copy()
        self.up = self.true_up.copy()
        self.boxed[:] = False
        self.status = np.full(n + m, BASIC, dtype=np.int8)
        self.x = np.zeros(n + m)
        for j in range(n):
            lo, up, c = self.lo[j], self.up[j], self.cost[j]
            if c > 0 or (c == 0 and np.isfinite(lo)):
                if not np.isfinite(lo):
                    self.lo[j] = (up if np.isfinite(up) else 0.0) - BOX
                    self.boxed[j] = True
                self.status[j], self.x[j] = AT_LB, self.lo[j]
            elif c < 0 or np.isfinite(up):
                if not np.isfinite(up):
                    self.up[j] = (lo if np.isfinite(lo) else 0.0) + BOX
                    self.boxed[j] = True
                self.status[j], self.x[j] = AT_UB, self.up[j]
            else:
                self.status[j], self.x[j] = FREE, 0.0
        self.head = np.arange(n, n + m)
        self._factor()
        self._recompute_basics()

    def _warm_start(self, basis: Basis) -> bool:
        n, m = self.n, self.m
        m_old = len(basis.head)
        if len(basis.status) != n + m_old or m_old > m:
            return False
        status = np.concatenate([basis.status[:n], basis.status[n:],
                                 np.full(m - m_old, BASIC, dtype=np.int8)]).astype(np.int8)
        values = np.concatenate([basis.values, np.zeros(m - m_old)])
        head = np.concatenate([basis.head, np.arange(n + m_old, n + m)])
        if (status == BASIC).sum() != m or len(np.unique(head)) != m:
            return False
        self.lo = self.true_lo.copy()
        self.up = self.true_up.copy()
        self.boxed[:] = False
        x = np.zeros(n + m)
        for j in np.flatnonzero(status != BASIC):
            lo, up = self.lo[j], self.up[j]
            st = status[j]
            if st == AT_LB and not np.isfinite(lo):
                st = AT_UB if np.isfinite(up) else FREE
            elif st == AT_UB and not np.isfinite(up):
                st = AT_LB if np.isfinite(lo) else FREE
            if st == AT_LB:
                x[j] = lo
            elif st == AT_UB:
                x[j] = up
            else:
                x[j] = min(max(values[j], lo), up)
                if x[j] == lo:
                    st = AT_LB
                elif x[j] == up:
                    st = AT_UB
            status[j] = st
        self.status, self.x, self.head = status, x, head
        try:
            self._factor()
        except LpNumericalError:
            return False
        self._recompute_basics()
        # make the basis dual feasible by moving nonbasics to the cheaper bound
        _, d = self._duals()
        for j in np.flatnonzero(self._dual_infeasible(d)):
            if status[j] == AT_LB and np.isfinite(self.up[j]):
                status[j], self.x[j] = AT_UB, self.up[j]
            elif status[j] == AT_UB and np.isfinite(self.lo[j]):
                status[j], self.x[j] = AT_LB, self.lo[j]
        self._recompute_basics()
        return True

    # ------------------------------------------------------------------ tests
    def _movable(self) -> np.ndarray:
        return (self.status != BASIC) & (self.lo < self.up)

    def _dual_infeasible(self, d: np.ndarray) -> np.ndarray:
        st, tol = self.status, self.opt_tol
        mov = self._movable()
        return mov & (((st == AT_LB) & (d < -tol)) | ((st == AT_UB) & (d > tol))
                      | ((st == FREE) & (np.abs(d) > tol)))

    def _primal_infeasibility(self) -> np.ndarray:
        xb = self.x[self.head]
        return np.maximum(self.lo[self.head] - xb, xb - self.up[self.head])

    def _tick(self, degenerate: bool):
        self.iterations += 1
        if self.iterations > self.iter_limit:
            raise LpNumericalError(f"iteration limit {self.iter_limit} reached")
        if degenerate:
            self.degenerate_run += 1
            if self.degenerate_run > self.bland_after:
                self.bland = True
        else:
            self.degenerate_run = 0
        if self.deadline is not None and self.iterations % 50 == 0 and time.monotonic() > self.deadline:
            raise LpTimeout("LP deadline reached")

    def _pivot(self, r: int, q: int, alpha: np.ndarray, leave_status: int, leave_value: float):
        out = self.head[r]
        self.head[r] = q
        self.status[q] = BASIC
        self.status[out] = leave_status
        self.x[out] = leave_value
        self.etas.append((r, alpha))
        if len(self.etas) >= self.refactor_every:
            self._factor()
            self._recompute_basics()

    # ---------------------------------------------------------------- dual
    def _dual_simplex(self) -> LpStatus | None:
        """Returns INFEASIBLE, or None once the basis is primal feasible."""
        tol = self.feas_tol
        while True:
            infeas = self._primal_infeasibility()
            if self.bland:
                cand = np.flatnonzero(infeas > tol)
                if not len(cand):
                    return None
                r = int(cand[np.argmin(self.head[cand])])
            else:
                r = int(np.argmax(infeas))
                if infeas[r] <= tol:
                    return None
            jr = self.head[r]
            going_up = self.x[jr] < self.lo[jr]
            s = 1.0 if going_up else -1.0
            e = np.zeros(self.m)
            e[r] = 1.0
            rho = self._btran(e)
            arow = self.AfT @ rho
            _, d = self._duals()
            st = self.status
            mov = self._movable()
            big = np.abs(arow) > self.pivot_tol
            cand = mov & big & (((st == AT_LB) & (arow * s < 0)) | ((st == AT_UB) & (arow * s > 0))
                                | (st == FREE))
            idx = np.flatnonzero(cand)
            if not len(idx):
                return LpStatus.INFEASIBLE
            dir_j = np.where(st[idx] == AT_LB, 1.0, np.where(st[idx] == AT_UB, -1.0,
                                                             -np.sign(arow[idx]) * s))
            dd = np.maximum(d[idx] * dir_j, 0.0)
            aa = np.abs(arow[idx])
            ratios = dd / aa
            if self.bland:
                tmin = ratios.min()
                ties = idx[ratios <= tmin + 1e-12]
                q = int(ties.min())
                tq = tmin
            else:
                tmax = ((dd + self.opt_tol) / aa).min()
                ok = ratios <= tmax
                pick = np.flatnonzero(ok)[np.argmax(aa[ok])]
                q = int(idx[pick])
                tq = ratios[pick]
            alpha = self._ftran(self._column(q))
            if abs(alpha[r]) < self.pivot_tol or abs(alpha[r] - arow[q]) > 1e-6 * (1 + abs(arow[q])):
                if self.etas:
                    self._factor()
                    self._recompute_basics()
                    continue
                if abs(alpha[r]) < self.pivot_tol:
                    raise LpNumericalError("vanishing pivot in dual simplex")
            target = self.lo[jr] if going_up else self.up[jr]
            theta = (self.x[jr] - target) / alpha[r]
            self.x[self.head] -= theta * alpha
            self.x[q] += theta
            self._pivot(r, q, alpha, AT_LB if going_up else AT_UB, target)
            self._tick(tq <= 1e-12)

    # -------------------------------------------------------------- primal
    def _primal_simplex(self) -> LpStatus | None:
        """Returns UNBOUNDED, or None at a dual feasible (optimal) basis."""
        ftol = self.feas_tol
        while True:
            _, d = self._duals()
            elig = np.flatnonzero(self._dual_infeasible(d))
            if not len(elig):
                return None
            q = int(elig.min()) if self.bland else int(elig[np.argmax(np.abs(d[elig]))])
            dirn = 1.0 if d[q] < 0 else -1.0
            alpha = self._ftran(self._column(q))
            rate = -dirn * alpha
            xb = self.x[self.head]
            lob, upb = self.lo[self.head], self.up[self.head]
            dec = (rate < -self.pivot_tol) & np.isfinite(lob)
            inc = (rate > self.pivot_tol) & np.isfinite(upb)
            rows = np.flatnonzero(dec | inc)
            room = np.where(dec[rows], xb[rows] - lob[rows], upb[rows] - xb[rows])
            ar = np.abs(rate[rows])
            if self.status[q] == FREE:
                own = (self.up[q] - self.x[q]) if dirn > 0 else (self.x[q] - self.lo[q])
            else:
                own = self.up[q] - self.lo[q]
            r = None
            t = np.inf
            if len(rows):
                ratios = np.maximum(room, 0.0) / ar
                if self.bland:
                    tmin = ratios.min()
                    ties = rows[ratios <= tmin + 1e-12]
                    r = int(ties[np.argmin(self.head[ties])])
                    t = tmin
                else:
                    tmax = ((room + ftol) / ar).min()
                    ok = ratios <= tmax
                    pick = np.flatnonzero(ok)[np.argmax(ar[ok])]
                    r = int(rows[pick])
                    t = ratios[pick]
            if own <= t:
                if not np.isfinite(own):
                    return LpStatus.UNBOUNDED
                self.x[self.head] -= dirn * own * alpha
                if dirn > 0:
                    self.status[q], self.x[q] = AT_UB, self.up[q]
                else:
                    self.status[q], self.x[q] = AT_LB, self.lo[q]
                self._tick(False)
                continue
            if r is None:
                return LpStatus.UNBOUNDED
            jr = self.head[r]
            to_lower = rate[r] < 0
            target = self.lo[jr] if to_lower else self.up[jr]
            self.x[self.head] -= dirn * t * alpha
            self.x[q] += dirn * t
            self._pivot(r, q, alpha, AT_LB if to_lower else AT_UB, target)
            self._tick(t <= 1e-12)

    # ---------------------------------------------------------------- driver
    def _run(self) -> LpStatus:
        for _ in range(20):
            res = self._dual_simplex()
            if res is LpStatus.INFEASIBLE:
                return res
            res = self._primal_simplex()
            if res is LpStatus.UNBOUNDED:
                return res
            if self.boxed.any():
                hit = self.boxed & (self.status != BASIC) & (
                    ((self.status == AT_LB) & (self.x <= self.lo)) | ((self.status == AT_UB) & (self.x >= self.up)))
                self.lo[self.boxed] = self.true_lo[self.boxed]
                self.up[self.boxed] = self.true_up[self.boxed]
                self.status[hit] = FREE
                self.boxed[:] = False
                if hit.any():
                    continue
            self._factor()
            self._recompute_basics()
            _, d = self._duals()
            if self._primal_infeasibility().max(initial=0.0) <= self.feas_tol and not self._dual_infeasible(d).any():
                return LpStatus.OPTIMAL
        raise LpNumericalError("simplex phases did not settle")

    def solve(self, problem: LpProblem, warm_basis: Basis | None = None,
              deadline: float | None = None) -> LpSolution:
        self._setup(problem)
        self.deadline = deadline
        n, m = self.n, self.m
        if n == 0:
            feasible = problem.max_violation(np.zeros(0)) <= self.feas_tol
            return LpSolution(LpStatus.OPTIMAL if feasible else LpStatus.INFEASIBLE,
                              np.zeros(0) if feasible else None, 0.0)
        if m == 0:
            return self._solve_unconstrained(problem)
        self.iter_limit = self.max_iter or max(20000, 10 * (n + m))
        attempts = [warm_basis, None, "bland"] if warm_basis is not None else [None, "bland"]
        last_exc = None
        for attempt in attempts:
            self.iterations = 0
            self.degenerate_run = 0
            self.bland = attempt == "bland"
            try:
                if isinstance(attempt, Basis):
                    if not self._warm_start(attempt):
                        continue
                else:
                    self._cold_start()
                status = self._run()
                break
            except LpNumericalError as exc:
                last_exc = exc
        else:
            raise LpNumericalError(f"simplex failed after retries: {last_exc}")
        return self._result(status)

    def _solve_unconstrained(self, p: LpProblem) -> LpSolution:
        x = np.where(p.c > 0, p.lb, np.where(p.c < 0, p.ub, np.where(np.isfinite(p.lb), p.lb,
                                                                      np.where(np.isfinite(p.ub), p.ub, 0.0))))
        if not np.isfinite(x).all():
            return LpSolution(LpStatus.UNBOUNDED, None, -np.inf)
        if (p.lb > p.ub).any():
            return LpSolution(LpStatus.INFEASIBLE, None, np.inf)
        return LpSolution(LpStatus.OPTIMAL, x, float(p.c @ x), reduced_costs=p.c.copy(), duals=np.zeros(0))

    def _result(self, status: LpStatus) -> LpSolution:
        n = self.n
        basis = Basis(self.head.copy(), self.status.copy(), self.x.copy())
        if status is not LpStatus.OPTIMAL:
            obj = np.inf if status is LpStatus.INFEASIBLE else -np.inf
            return LpSolution(status, None, obj, basis=basis, iterations=self.iterations)
        y, d = self._duals()
        x = self.x[:n].copy()
        # snap nonbasic structurals exactly onto their bounds
        x = np.clip(x, self.true_lo[:n], self.true_up[:n])
        return LpSolution(LpStatus.OPTIMAL, x, float(self.problem.c @ x), basis=basis,
                          duals=y, reduced_costs=d[:n], iterations=self.iterations)

    # ------------------------------------------------------------------ cuts
    def tableau_row(self, r: int) -> np.ndarray:
        """Row ``r`` of B^-1 [A I] at the current basis."""
        e = np.zeros(self.m)
        e[r] = 1.0
        return self.AfT @ self._btran(e)


def solve_lp(problem: LpProblem, warm_basis: Basis | None = None, *,
             solver: SimplexSolver | None = None, deadline: float | None = None) -> LpSolution:
    """Solve ``problem``; ``warm_basis`` comes from an earlier, similar solve."""
    return (solver or SimplexSolver()).solve(problem, warm_basis, deadline=deadline)


def kkt_residuals(problem: LpProblem, sol: LpSolution) -> dict[str, float]:
    """Primal, dual and complementary-slackness residuals of an optimal solution.

    Duals follow ``min c x, A x + s = b``: reduced costs ``d = c - A^T y`` and
    logical reduced costs ``-y``.
    """
    x, y = sol.x, sol.duals
    p = problem
    d = p.c - p.A.T @ y
    slack = p.b - p.A @ x
    lo = np.concatenate([p.lb, np.where(p.sense == "G", -np.inf, 0.0)])
    up = np.concatenate([p.ub, np.where(p.sense == "L", np.inf, 0.0)])
    v = np.concatenate([x, slack])
    dd = np.concatenate([d, -y])
    at_lo = np.isfinite(lo) & (np.abs(v - lo) <= 1e-7 * (1 + np.abs(lo)))
    at_up = np.isfinite(up) & (np.abs(v - up) <= 1e-7 * (1 + np.abs(up)))
    # reduced cost must be >= 0 at lower, <= 0 at upper, 0 strictly inside
    dual_viol = np.where(at_lo & at_up, 0.0,
                         np.where(at_lo, np.maximum(-dd, 0.0),
                                  np.where(at_up, np.maximum(dd, 0.0), np.abs(dd))))
    gap = np.minimum(np.where(np.isfinite(lo), v - lo, np.inf), np.where(np.isfinite(up), up - v, np.inf))
    comp = np.abs(dd) * np.where(np.isfinite(gap), np.abs(np.where(np.isfinite(gap), gap, 0.0)), 1.0)
    return {"primal": p.max_violation(x), "dual": float(dual_viol.max(initial=0.0)),
            "complementary": float(comp.max(initial=0.0))}


# ---------------------------------------------------------------------------
# Gomory mixed-integer cuts


@dataclass
class CutStats:
    rounds: int = 0
    cuts: int = 0
    discarded: int = 0


def _gmi_coefficients(a: np.ndarray, is_int: np.ndarray, f0: float) -> np.ndarray:
    fj = a - np.floor(a)
    g_int = np.where(fj <= f0, fj / f0, (1.0 - fj) / (1.0 - f0))
    g_cont = np.where(a >= 0, a / f0, -a / (1.0 - f0))
    return np.where(is_int, g_int, g_cont)


def gomory_cuts(solver: SimplexSolver, sol: LpSolution, max_cuts: int = 100,
                min_frac: float = 0.01, max_dynamism: float = 1e6):
    """Gomory mixed-integer cuts from the optimal basis held by ``solver``.

    Returns ``(rows, rhs)`` for cuts ``rows @ x >= rhs`` in structural space.
    Integer nonbasic columns with integral bounds are treated as integer;
    logical columns and continuous structurals use the continuous rule.
    """
    p = solver.problem
    n, m = solver.n, solver.m
    lo, up = solver.true_lo, solver.true_up
    status = sol.basis.status
    head = sol.basis.head
    xfull = sol.basis.values
    integer = p.integer

    frac_rows = []
    for r in range(m):
        j = head[r]
        if j < n and integer[j]:
            f = xfull[j] - np.floor(xfull[j])
            if min(f, 1 - f) >= min_frac:
                frac_rows.append((-min(f, 1 - f), r, f))
    frac_rows.sort()
    rows_out, rhs_out = [], []
    discarded = 0
    nonbasic = status != BASIC
    int_cols = np.zeros(n + m, dtype=bool)
    int_cols[:n] = integer & (np.floor(lo[:n]) == lo[:n]) & ((np.floor(up[:n]) == up[:n]) | ~np.isfinite(up[:n]))
    slack_b = p.b
    for _, r, f0 in frac_rows[:max_cuts]:
        arow = solver.tableau_row(r)
        cols = np.flatnonzero(nonbasic & (np.abs(arow) > 1e-11) & (lo < up))
        if (status[cols] == FREE).any():
            discarded += 1
            continue
        at_ub = status[cols] == AT_UB
        a = np.where(at_ub, -arow[cols], arow[cols])
        g = _gmi_coefficients(a, int_cols[cols], f0)
        # sum g_j xt_j >= 1 with xt_j = x_j - lo_j (at lower) or up_j - x_j (at upper)
        pi = np.zeros(n)
        pi0 = 1.0
        sgn = np.where(at_ub, -1.0, 1.0)
        struct = cols < n
        sc = cols[struct]
        pi[sc] += sgn[struct] * g[struct]
        pi0 += float(np.sum(g[struct] * np.where(at_ub[struct], -up[sc], lo[sc])))
        lc = cols[~struct] - n
        if len(lc):
            # logical s_i = b_i - A_i x
            gl, ub_l = g[~struct], at_ub[~struct]
            bound = np.where(ub_l, up[cols[~struct]], lo[cols[~struct]])
            w = np.where(ub_l, gl, -gl)
            pi += p.A[lc].T @ w
            pi0 -= float(np.sum(np.where(ub_l, gl * (bound - slack_b[lc]), gl * (slack_b[lc] - bound))))
        cut = _clean_cut(pi, pi0, p.lb, p.ub, max_dynamism)
        if cut is None:
            discarded += 1
            continue
        pi, pi0 = cut
        viol = pi0 - pi @ sol.x
        if viol <= 1e-6 * max(1.0, np.abs(pi).max()):
            discarded += 1
            continue
        rows_out.append(pi)
        rhs_out.append(pi0)
    if not rows_out:
        return sp.csr_matrix((0, n)), np.zeros(0), discarded
    return sp.csr_matrix(np.vstack(rows_out)), np.array(rhs_out), discarded


def _clean_cut(pi, pi0, lb, ub, max_dynamism):
    scale = np.abs(pi).max() if len(pi) else 0.0
    if scale <= 0 or not np.isfinite(scale):
        return None
    pi = pi / scale
    pi0 = pi0 / scale
    tiny = (np.abs(pi) < 1e-9) & (pi != 0)
    for j in np.flatnonzero(tiny):
        bound = ub[j] if pi[j] > 0 else lb[j]
        if not np.isfinite(bound):
            continue
        pi0 -= pi[j] * bound
        pi[j] = 0.0
    nz = np.abs(pi[pi != 0])
    if not len(nz) or nz.max() / nz.min() > max_dynamism:
        return None
    # small safety margin against round-off in the derivation
    pi0 -= 1e-9 * max(1.0, abs(pi0))
    return pi, pi0


def strengthen(problem: LpProblem, max_rounds: int = 5, *, solver: SimplexSolver | None = None,
               warm_basis: Basis | None = None, max_cuts: int = 100,
               deadline: float | None = None) -> tuple[LpProblem, LpSolution]:
    """Tighten the relaxation by rounds of Gomory mixed-integer cuts.

    Each round derives cuts from the current optimal basis, appends them as
    ``>=`` rows and re-solves from that basis. Stops early when no violated
    cut survives the numerical filters.
    """
    solver = solver or SimplexSolver()
    sol = solver.solve(problem, warm_basis, deadline=deadline)
    if not sol.optimal:
        return problem, sol
    history = [sol.objective]
    for _ in range(max_rounds):
        rows, rhs, _ = gomory_cuts(solver, sol, max_cuts=max_cuts)
        if not len(rhs):
            break
        k = problem.n_cuts
        cand = problem.add_rows(rows, ["G"] * len(rhs), rhs,
                                names=[f"gmi_{k + i}" for i in range(len(rhs))], cuts=True)
        new = solver.solve(cand, sol.basis, deadline=deadline)
        if not new.optimal:
            # an infeasible cut system means the integer problem is infeasible
            if new.status is LpStatus.INFEASIBLE:
                new.bound_history = history + [np.inf]
                return cand, new
            break
        problem, sol = cand, new
        history.append(max(sol.objective, history[-1]))
    sol.bound_history = history
    # leave the solver positioned on the returned basis
    if solver.problem is not problem:
        sol = solver.solve(problem, sol.basis, deadline=deadline)
        sol.bound_history = history
    return problem, sol
