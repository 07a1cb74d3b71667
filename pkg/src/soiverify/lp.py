"""Bounded-variable primal simplex in equality form.

Every constraint is an equality row over variables with (possibly
infinite) bounds; callers express inequalities through bounded slack
columns. Feasibility (phase I) drives artificial columns to zero;
minimization (phase II) reuses the feasible basis, so swapping the
objective re-optimizes incrementally without a restart. The dense basis
inverse is maintained with product-form updates and refreshed
periodically.

Pricing is Dantzig's rule, falling back to Bland's rule after a run of
degenerate pivots so that the classic cycling instances terminate.
Iteration counts are capped; hitting the cap is reported as a distinct
numerical status, never converted into a verdict.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundsMap

FEAS_TOL = 1e-9     # row / bound feasibility
COST_TOL = 1e-8     # reduced-cost optimality
PIVOT_TOL = 1e-10   # smallest usable pivot element
DEGEN_TOL = 1e-12
REFRESH_EVERY = 64


class LpStatus(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_LIMIT = "numerical_limit"


@dataclass
class LpSolution:
    status: LpStatus
    assignment: np.ndarray | None
    objective_value: float
    pivots: int


@dataclass
class LinearProgram:
    """min objective s.t. rows hold with equality and bounds hold."""

    n_vars: int = 0
    col_lower: list[float] = field(default_factory=list)
    col_upper: list[float] = field(default_factory=list)
    rows: list[tuple[dict[int, float], float]] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)

    @classmethod
    def with_bounds(cls, lower, upper) -> "LinearProgram":
        lower = [float(v) for v in lower]
        upper = [float(v) for v in upper]
        return cls(n_vars=len(lower), col_lower=lower, col_upper=upper)

    def add_var(self, lower: float, upper: float) -> int:
        self.col_lower.append(float(lower))
        self.col_upper.append(float(upper))
        self.n_vars += 1
        return self.n_vars - 1

    def add_row(self, coeffs: dict[int, float], rhs: float) -> int:
        for v in coeffs:
            if not (0 <= v < self.n_vars):
                raise ValueError(f"row references unknown variable {v}")
        self.rows.append((dict(coeffs), float(rhs)))
        return len(self.rows) - 1

    @property
    def n_rows(self) -> int:
        return len(self.rows)


def write_lp_text(lp: LinearProgram, path: str) -> None:
    """Dump in LP text format for debugging with external tools."""
    with open(path, "w") as fh:
        fh.write("Minimize\n obj:")
        if lp.objective:
            for v, c in sorted(lp.objective.items()):
                fh.write(f" {c:+.17g} x{v}")
        else:
            fh.write(" 0 x0")
        fh.write("\nSubject To\n")
        for i, (coeffs, rhs) in enumerate(lp.rows):
            terms = " ".join(f"{c:+.17g} x{v}" for v, c in sorted(coeffs.items()))
            fh.write(f" r{i}: {terms} = {rhs:.17g}\n")
        fh.write("Bounds\n")
        for v in range(lp.n_vars):
            lo, hi = lp.col_lower[v], lp.col_upper[v]
            lo_s = "-inf" if lo == -np.inf else f"{lo:.17g}"
            hi_s = "+inf" if hi == np.inf else f"{hi:.17g}"
            fh.write(f" {lo_s} <= x{v} <= {hi_s}\n")
        fh.write("End\n")


# variable status codes
_BASIC = 0
_AT_LOWER = 1
_AT_UPPER = 2
_NB_FREE = 3


class _Numerical(Exception):
    pass


class SimplexSolver:
    """Stateful solver over one LinearProgram; supports warm-started
    objective replacement between minimizations."""

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        n, m = lp.n_vars, lp.n_rows
        self.n = n
        self.m = m
        self.total = n + m  # structural plus one artificial per row
        A = np.zeros((m, self.total))
        b = np.empty(m)
        for i, (coeffs, rhs) in enumerate(lp.rows):
            for v, c in coeffs.items():
                A[i, v] = c
            A[i, n + i] = 1.0
            b[i] = rhs
        self.A = A
        self.b = b
        self.lo = np.concatenate(
            [np.asarray(lp.col_lower, dtype=np.float64), np.zeros(m)]
        )
        self.hi = np.concatenate(
            [np.asarray(lp.col_upper, dtype=np.float64), np.zeros(m)]
        )
        self.x = np.zeros(self.total)
        self.vstat = np.full(self.total, _AT_LOWER, dtype=np.int8)
        self.basis = np.arange(n, n + m)
        self.Binv = np.eye(m)
        self.total_pivots = 0
        self._feasible = False
        self._status: LpStatus | None = None
        self._pending_objective: dict[int, float] = dict(lp.objective)
        self.iteration_cap = 50 * (n + m)

    # -- basis maintenance ------------------------------------------------

    def _refresh(self):
        if self.m == 0:
            return
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise _Numerical("singular basis") from None
        nb_mask = np.ones(self.total, dtype=bool)
        nb_mask[self.basis] = False
        rhs = self.b - self.A[:, nb_mask] @ self.x[nb_mask]
        self.x[self.basis] = self.Binv @ rhs

    def _start_point(self):
        """Nonbasic starting values: the finite bound nearest zero."""
        lo, hi = self.lo[: self.n], self.hi[: self.n]
        x = np.zeros(self.n)
        stat = np.full(self.n, _NB_FREE, dtype=np.int8)
        pick_lo = np.isfinite(lo) & (~np.isfinite(hi) | (np.abs(lo) <= np.abs(hi)))
        pick_hi = np.isfinite(hi) & ~pick_lo
        x[pick_lo] = lo[pick_lo]
        stat[pick_lo] = _AT_LOWER
        x[pick_hi] = hi[pick_hi]
        stat[pick_hi] = _AT_UPPER
        self.x[: self.n] = x
        self.vstat[: self.n] = stat

    # -- core iteration ----------------------------------------------------

    def _bound_only(self, c: np.ndarray) -> str:
        for j in range(self.n):
            cj = c[j]
            if cj > COST_TOL:
                if not np.isfinite(self.lo[j]):
                    return "unbounded"
                self.x[j] = self.lo[j]
                self.vstat[j] = _AT_LOWER
            elif cj < -COST_TOL:
                if not np.isfinite(self.hi[j]):
                    return "unbounded"
                self.x[j] = self.hi[j]
                self.vstat[j] = _AT_UPPER
        return "optimal"

    def _simplex(self, c: np.ndarray) -> tuple[str, int]:
        """Minimize c'x from the current basis. Returns (reason, pivots)
        with reason in {'optimal', 'unbounded', 'limit'}."""
        m = self.m
        if m == 0:
            return self._bound_only(c), 0
        pivots = 0
        degen_run = 0
        bland = False
        obj_at_switch = np.inf
        since_refresh = 0

        for _ in range(self.iteration_cap):
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            d[self.basis] = 0.0

            at_lo = self.vstat == _AT_LOWER
            at_hi = self.vstat == _AT_UPPER
            free = self.vstat == _NB_FREE
            viol = np.zeros(self.total)
            viol[at_lo] = -d[at_lo]
            viol[at_hi] = d[at_hi]
            viol[free] = np.abs(d[free])
            eligible = viol > COST_TOL
            if not eligible.any():
                return "optimal", pivots
            if bland:
                j = int(np.flatnonzero(eligible)[0])
            else:
                j = int(np.argmax(viol))
            direction = 1.0 if (at_lo[j] or (free[j] and d[j] < 0)) else -1.0

            w = self.Binv @ self.A[:, j]
            own = np.inf
            if np.isfinite(self.lo[j]) and np.isfinite(self.hi[j]):
                own = self.hi[j] - self.lo[j]
            delta = -direction * w
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            t_best = own
            leave_row = -1
            leave_at = _AT_LOWER
            for i in range(m):
                dl = delta[i]
                if dl > PIVOT_TOL:
                    if not np.isfinite(hib[i]):
                        continue
                    t = (hib[i] - xb[i]) / dl
                    at = _AT_UPPER
                elif dl < -PIVOT_TOL:
                    if not np.isfinite(lob[i]):
                        continue
                    t = (lob[i] - xb[i]) / dl
                    at = _AT_LOWER
                else:
                    continue
                if t < 0.0:
                    t = 0.0
                if t < t_best - DEGEN_TOL or (
                    t <= t_best + DEGEN_TOL
                    and leave_row >= 0
                    and self.basis[i] < self.basis[leave_row]
                ):
                    t_best = t
                    leave_row = i
                    leave_at = at

            if not np.isfinite(t_best):
                return "unbounded", pivots

            if t_best <= DEGEN_TOL:
                degen_run += 1
            else:
                degen_run = 0
                if bland and c @ self.x < obj_at_switch - DEGEN_TOL:
                    bland = False
            if not bland and degen_run > 3 * self.total:
                bland = True
                obj_at_switch = c @ self.x
                degen_run = 0

            if leave_row < 0 or own <= t_best + DEGEN_TOL:
                # bound flip, no basis change
                self.x[j] += direction * own
                self.x[self.basis] -= direction * own * w
                self.vstat[j] = _AT_UPPER if self.vstat[j] == _AT_LOWER else _AT_LOWER
                pivots += 1
                continue

            # pivot: j enters, basis[leave_row] leaves at the bound it hit
            leaving = self.basis[leave_row]
            self.x[j] += direction * t_best
            self.x[self.basis] -= direction * t_best * w
            self.x[leaving] = (
                self.lo[leaving] if leave_at == _AT_LOWER else self.hi[leaving]
            )
            self.vstat[leaving] = leave_at
            self.vstat[j] = _BASIC
            self.basis[leave_row] = j
            piv = w[leave_row]
            if abs(piv) < PIVOT_TOL:
                raise _Numerical("tiny pivot")
            self.Binv[leave_row, :] /= piv
            others = np.arange(m) != leave_row
            self.Binv[others, :] -= np.outer(w[others], self.Binv[leave_row, :])
            pivots += 1
            since_refresh += 1
            if since_refresh >= REFRESH_EVERY:
                self._refresh()
                since_refresh = 0
        return "limit", pivots

    def _solution_ok(self) -> bool:
        n = self.n
        if self.m:
            resid = np.abs(self.A[:, :n] @ self.x[:n] - self.b)
            if resid.max() > FEAS_TOL:
                return False
        if n == 0:
            return True
        lo_violation = float(np.max(self.lo[:n] - self.x[:n], initial=0.0))
        hi_violation = float(np.max(self.x[:n] - self.hi[:n], initial=0.0))
        return lo_violation <= FEAS_TOL and hi_violation <= FEAS_TOL

    # -- public API ----------------------------------------------------------

    def check_sat(self) -> LpSolution:
        """Phase I: find any assignment satisfying rows and bounds."""
        lo = np.asarray(self.lp.col_lower, dtype=np.float64)
        hi = np.asarray(self.lp.col_upper, dtype=np.float64)
        if self.n and (lo > hi + FEAS_TOL).any():
            self._status = LpStatus.INFEASIBLE
            return LpSolution(LpStatus.INFEASIBLE, None, np.inf, 0)
        self._start_point()
        m, n = self.m, self.n
        pivots = 0
        if m > 0:
            resid = self.b - self.A[:, :n] @ self.x[:n]
            self.x[n:] = resid
            self.lo[n:] = np.minimum(resid, 0.0)
            self.hi[n:] = np.maximum(resid, 0.0)
            self.basis = np.arange(n, n + m)
            self.vstat[n:] = _BASIC
            self.Binv = np.eye(m)
            c1 = np.zeros(self.total)
            c1[n:] = np.sign(resid)
            try:
                reason, pivots = self._simplex(c1)
            except _Numerical:
                reason = "limit"
            self.total_pivots += pivots
            if reason != "optimal":
                # phase I is bounded below by zero, so anything else is a
                # numerical failure, never an infeasibility proof
                self._status = LpStatus.NUMERICAL_LIMIT
                return LpSolution(LpStatus.NUMERICAL_LIMIT, None, np.inf, pivots)
            infeas = float(c1 @ self.x)
            if infeas > FEAS_TOL:
                self._status = LpStatus.INFEASIBLE
                return LpSolution(LpStatus.INFEASIBLE, None, np.inf, pivots)
            # pin artificials to zero for all later work
            self.lo[n:] = 0.0
            self.hi[n:] = 0.0
            nonbasic_art = np.flatnonzero(self.vstat[n:] != _BASIC) + n
            self.x[nonbasic_art] = 0.0
            self.vstat[nonbasic_art] = _AT_LOWER
            try:
                self._refresh()
            except _Numerical:
                self._status = LpStatus.NUMERICAL_LIMIT
                return LpSolution(LpStatus.NUMERICAL_LIMIT, None, np.inf, pivots)
        if not self._solution_ok():
            self._status = LpStatus.NUMERICAL_LIMIT
            return LpSolution(LpStatus.NUMERICAL_LIMIT, None, np.inf, pivots)
        self._feasible = True
        self._status = LpStatus.FEASIBLE
        return LpSolution(LpStatus.FEASIBLE, self.x[:n].copy(), 0.0, pivots)

    def replace_objective(self, objective: dict[int, float]) -> None:
        """Stage a new objective; the next minimize call reuses the basis."""
        self._pending_objective = dict(objective)

    def minimize(self, objective: dict[int, float] | None = None) -> LpSolution:
        """Phase II: minimize the (possibly replaced) objective."""
        if objective is not None:
            self.replace_objective(objective)
        if self._status is LpStatus.INFEASIBLE:
            return LpSolution(LpStatus.INFEASIBLE, None, np.inf, 0)
        if not self._feasible:
            sol = self.check_sat()
            if sol.status is not LpStatus.FEASIBLE:
                return sol
        c = np.zeros(self.total)
        for v, coef in self._pending_objective.items():
            c[v] += coef
        try:
            reason, pivots = self._simplex(c)
            if reason == "optimal":
                self._refresh()
                if not self._solution_ok():
                    reason = "limit"
        except _Numerical:
            reason, pivots = "limit", 0
        self.total_pivots += pivots
        if reason == "unbounded":
            return LpSolution(LpStatus.UNBOUNDED, None, -np.inf, pivots)
        if reason == "limit":
            return LpSolution(LpStatus.NUMERICAL_LIMIT, None, np.inf, pivots)
        value = float(c @ self.x)
        return LpSolution(LpStatus.FEASIBLE, self.x[: self.n].copy(), value, pivots)


def check_sat(lp: LinearProgram) -> LpSolution:
    return SimplexSolver(lp).check_sat()


def opt_sat(objective: dict[int, float], lp: LinearProgram) -> LpSolution:
    solver = SimplexSolver(lp)
    feas = solver.check_sat()
    if feas.status is not LpStatus.FEASIBLE:
        return feas
    sol = solver.minimize(objective)
    return LpSolution(
        sol.status, sol.assignment, sol.objective_value, sol.pivots + feas.pivots
    )


def derive_row_bounds(lp: LinearProgram, bm: BoundsMap, max_sweeps: int = 5) -> BoundsMap:
    """Implied per-variable bounds from each equality row, iterated to a
    capped fixpoint. Sound: never excludes a point satisfying the rows and
    the incoming bounds. `bm` must cover at least the structural variables;
    columns it does not cover fall back to the LP's own bounds."""
    lo = np.asarray(lp.col_lower, dtype=np.float64).copy()
    hi = np.asarray(lp.col_upper, dtype=np.float64).copy()
    k = min(len(bm.lower), lp.n_vars)
    lo[:k] = np.maximum(lo[:k], bm.lower[:k])
    hi[:k] = np.minimum(hi[:k], bm.upper[:k])
    infeasible = bool(bm.infeasible or (lo > hi + FEAS_TOL).any())

    rows = [(list(coeffs.items()), rhs) for coeffs, rhs in lp.rows]
    for _ in range(max_sweeps):
        changed = False
        for items, rhs in rows:
            act_lo = act_hi = 0.0
            n_inf_lo = n_inf_hi = 0
            for v, c in items:
                if c > 0:
                    tlo, thi = c * lo[v], c * hi[v]
                else:
                    tlo, thi = c * hi[v], c * lo[v]
                if np.isfinite(tlo):
                    act_lo += tlo
                else:
                    n_inf_lo += 1
                if np.isfinite(thi):
                    act_hi += thi
                else:
                    n_inf_hi += 1
            for v, c in items:
                if abs(c) < 1e-12:
                    continue
                if c > 0:
                    tlo, thi = c * lo[v], c * hi[v]
                else:
                    tlo, thi = c * hi[v], c * lo[v]
                if n_inf_lo - (0 if np.isfinite(tlo) else 1) > 0:
                    rest_lo = -np.inf
                else:
                    rest_lo = act_lo - (tlo if np.isfinite(tlo) else 0.0)
                if n_inf_hi - (0 if np.isfinite(thi) else 1) > 0:
                    rest_hi = np.inf
                else:
                    rest_hi = act_hi - (thi if np.isfinite(thi) else 0.0)
                if c > 0:
                    new_lo = (rhs - rest_hi) / c
                    new_hi = (rhs - rest_lo) / c
                else:
                    new_lo = (rhs - rest_lo) / c
                    new_hi = (rhs - rest_hi) / c
                if np.isfinite(new_lo) and new_lo > lo[v] + 1e-12:
                    lo[v] = new_lo
                    changed = True
                if np.isfinite(new_hi) and new_hi < hi[v] - 1e-12:
                    hi[v] = new_hi
                    changed = True
                if lo[v] > hi[v] + FEAS_TOL:
                    infeasible = True
        if infeasible or not changed:
            break
    return BoundsMap(lo, hi, infeasible)
