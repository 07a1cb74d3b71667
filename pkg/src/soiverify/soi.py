"""Sum-of-infeasibilities cost over the relaxation and its stochastic
minimization.

Per unstable ReLU the cost carries one error term, either post - pre
(active) or post (inactive); both are nonnegative over the triangle
relaxation and a pattern whose LP minimum is zero yields an assignment
that satisfies every ReLU exactly. The pattern space is searched with
Metropolis-Hastings (random single flips, acceptance min(1, exp(-beta *
increase))) or with a greedy first-improvement walk that falls back to a
random neighbor at local minima.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import BoundsMap, PhaseFixings
from .lp import LpStatus, SimplexSolver
from .query import ConstraintSystem, check_assignment
from .relaxation import build_relaxation

WITNESS_TOL = 1e-6
COST_ZERO_TOL = 1e-8


class SoiStatus(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class SoiConfig:
    T: int = 2                      # rejections before giving up on a node
    beta: float = 10.0              # acceptance sharpness
    seed: int | None = None
    proposal: str = "random_flip"
    strategy: str = "mcmc"          # mcmc | walksat | lponly
    visited_tracking_max: int = 20
    reset_rejections_on_accept: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("rejection threshold must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.strategy not in ("mcmc", "walksat", "lponly"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class PhasePattern:
    """Choice of error term per unstable ReLU (True = active term)."""

    relus: tuple[int, ...]
    active: tuple[bool, ...]

    def flipped(self, pos: int) -> "PhasePattern":
        new = list(self.active)
        new[pos] = not new[pos]
        return PhasePattern(self.relus, tuple(new))

    def key(self) -> int:
        mask = 0
        for i, a in enumerate(self.active):
            if a:
                mask |= 1 << i
        return mask

    def term_for(self, relu: int) -> bool:
        return self.active[self.relus.index(relu)]


@dataclass
class SoiOutcome:
    status: SoiStatus
    witness: np.ndarray | None = None
    best_cost: float = math.inf
    best_pattern: PhasePattern | None = None
    proposals: int = 0
    accepts: int = 0
    rejects: int = 0
    lp_pivots: int = 0
    patterns_visited: int = 0
    impact_events: list[tuple[int, float]] = field(default_factory=list)
    numerical: bool = False


def vio(pre: float, post: float) -> float:
    """ReLU error: the smaller of the active and inactive phase errors."""
    return min(post - pre, post)


def soi_objective(pattern: PhasePattern, cs: ConstraintSystem) -> dict[int, float]:
    obj: dict[int, float] = {}
    for relu, is_active in zip(pattern.relus, pattern.active):
        pre = int(cs.index.relu_pre[relu])
        post = int(cs.index.relu_post[relu])
        obj[post] = obj.get(post, 0.0) + 1.0
        if is_active:
            obj[pre] = obj.get(pre, 0.0) - 1.0
    return obj


def initial_phase(alpha: np.ndarray, cs: ConstraintSystem, free_relus) -> PhasePattern:
    """Pattern induced by the activation signs of `alpha` (ties go active)."""
    relus = tuple(int(r) for r in free_relus)
    active = tuple(bool(alpha[cs.index.relu_pre[r]] >= 0.0) for r in relus)
    return PhasePattern(relus, active)


def propose(pattern: PhasePattern, rng: np.random.Generator):
    """Flip the term of one uniformly chosen ReLU (symmetric, ergodic)."""
    if not pattern.relus:
        raise ValueError("no unstable ReLU to flip")
    pos = int(rng.integers(len(pattern.relus)))
    return pattern.flipped(pos), pattern.relus[pos]


def accept(cost: float, cost_new: float, beta: float, rng: np.random.Generator) -> bool:
    """Metropolis rule; improvements pass without consuming randomness."""
    if cost_new <= cost:
        return True
    return rng.random() < math.exp(-beta * (cost_new - cost))


def walksat_step(
    pattern: PhasePattern, cost_eval, rng: np.random.Generator
) -> PhasePattern:
    """Evaluate neighbors in random order and move to the first strict
    improvement; at a local minimum move to a uniformly random neighbor."""
    base = cost_eval(pattern)
    n = len(pattern.relus)
    for pos in rng.permutation(n):
        cand = pattern.flipped(int(pos))
        if cost_eval(cand) < base:
            return cand
    return pattern.flipped(int(rng.integers(n)))


class _Budget:
    def __init__(self, deadline=None, max_proposals=None):
        self.deadline = deadline
        self.max_proposals = max_proposals

    def exhausted(self, proposals: int) -> bool:
        if self.max_proposals is not None and proposals >= self.max_proposals:
            return True
        return self.deadline is not None and time.monotonic() >= self.deadline


def minimize_soi(
    cs: ConstraintSystem,
    bm: BoundsMap,
    fix: PhaseFixings,
    cfg: SoiConfig,
    rng: np.random.Generator | None = None,
    deadline: float | None = None,
    max_proposals: int | None = None,
) -> SoiOutcome:
    """Two-phase probe of one search node.

    Phase I solves the relaxation for feasibility; phase II searches phase
    patterns for one with zero minimal cost. Returns SAT with a checked
    witness, UNSAT when the relaxation is infeasible or every pattern has
    been evaluated with positive cost, and UNKNOWN otherwise (rejection
    threshold, exhausted budget, or numerical trouble).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    budget = _Budget(deadline, max_proposals)
    out = SoiOutcome(status=SoiStatus.UNKNOWN)

    build = build_relaxation(cs, bm, fix)
    solver = SimplexSolver(build.lp)
    feas = solver.check_sat()
    out.lp_pivots += feas.pivots
    if feas.status is LpStatus.INFEASIBLE:
        out.status = SoiStatus.UNSAT
        return out
    if feas.status is not LpStatus.FEASIBLE:
        out.numerical = True
        return out
    alpha0 = feas.assignment[: cs.n_vars]
    free = fix.free_indices()
    if check_assignment(cs, alpha0, WITNESS_TOL):
        out.status = SoiStatus.SAT
        out.witness = alpha0
        out.best_cost = 0.0
        return out
    if len(free) == 0:
        # all phases fixed: a feasible relaxation point satisfies the exact
        # query, so failing the check above can only be numerical noise
        out.numerical = True
        return out

    pattern = initial_phase(alpha0, cs, free)
    track = len(free) <= cfg.visited_tracking_max
    visited: set[int] = {pattern.key()} if track else set()
    n_patterns = 1 << len(free)

    def all_visited() -> bool:
        return track and len(visited) >= n_patterns

    sol = solver.minimize(soi_objective(pattern, cs))
    out.lp_pivots += sol.pivots
    if sol.status is not LpStatus.FEASIBLE:
        out.numerical = True
        return out
    cost = sol.objective_value
    alpha = sol.assignment[: cs.n_vars]
    out.best_cost = cost
    out.best_pattern = pattern

    if cfg.strategy == "lponly":
        out.patterns_visited = len(visited)
        return out

    def evaluate(cand: PhasePattern):
        solver.replace_objective(soi_objective(cand, cs))
        s = solver.minimize()
        out.lp_pivots += s.pivots
        return s

    if cfg.strategy == "mcmc":
        k = 0
        while cost > COST_ZERO_TOL and not all_visited() and k < cfg.T:
            if budget.exhausted(out.proposals):
                break
            cand, flipped = propose(pattern, rng)
            s = evaluate(cand)
            if s.status is not LpStatus.FEASIBLE:
                out.numerical = True
                return out
            out.proposals += 1
            c_new = s.objective_value
            out.impact_events.append((flipped, abs(cost - c_new)))
            if track:
                visited.add(cand.key())
            if c_new < out.best_cost:
                out.best_cost = c_new
                out.best_pattern = cand
            if accept(cost, c_new, cfg.beta, rng):
                pattern, cost = cand, c_new
                alpha = s.assignment[: cs.n_vars]
                out.accepts += 1
                if cfg.reset_rejections_on_accept:
                    k = 0
            else:
                k += 1
                out.rejects += 1
    else:  # walksat
        cache: dict[int, tuple[float, np.ndarray]] = {
            pattern.key(): (cost, alpha)
        }

        def cost_eval(cand: PhasePattern) -> float:
            key = cand.key()
            if key not in cache:
                s = evaluate(cand)
                if s.status is not LpStatus.FEASIBLE:
                    raise _WalksatNumerical()
                out.proposals += 1
                if track:
                    visited.add(key)
                cache[key] = (s.objective_value, s.assignment[: cs.n_vars])
                if cand != pattern:
                    flipped = _flip_between(pattern, cand)
                    if flipped is not None:
                        out.impact_events.append(
                            (flipped, abs(cache[pattern.key()][0] - s.objective_value))
                        )
                if s.objective_value < out.best_cost:
                    out.best_cost = s.objective_value
                    out.best_pattern = cand
            return cache[key][0]

        k = 0
        try:
            while cost > COST_ZERO_TOL and not all_visited() and k < cfg.T:
                if budget.exhausted(out.proposals):
                    break
                nxt = walksat_step(pattern, cost_eval, rng)
                c_new = cost_eval(nxt)
                if c_new < cost:
                    out.accepts += 1
                else:
                    k += 1
                    out.rejects += 1
                pattern = nxt
                cost, alpha = cache[nxt.key()]
        except _WalksatNumerical:
            out.numerical = True
            return out

    out.patterns_visited = len(visited)
    if cost <= COST_ZERO_TOL:
        if check_assignment(cs, alpha, WITNESS_TOL):
            out.status = SoiStatus.SAT
            out.witness = alpha
            out.best_cost = cost
        else:
            out.numerical = True
        return out
    if all_visited():
        out.status = SoiStatus.UNSAT
        return out
    return out


class _WalksatNumerical(Exception):
    pass


def _flip_between(a: PhasePattern, b: PhasePattern) -> int | None:
    for relu, x, y in zip(a.relus, a.active, b.active):
        if x != y:
            return relu
    return None
