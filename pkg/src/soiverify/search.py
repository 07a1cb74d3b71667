"""Complete branch-and-bound over ReLU phases.

Each node tightens bounds, detects implied phase fixings, builds the
relaxation, and probes it with the configured strategy. An inconclusive
node splits on one ReLU, chosen by the pseudo-impact score (an
exponential moving average of observed cost changes) once the tree is
deep enough, and by static topological order near the root. Bounds
derived at a node are inherited by its children.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import (
    ACTIVE,
    INACTIVE,
    BoundsMap,
    PhaseFixings,
    back_substitute,
    detect_fixed,
    interval_propagate,
)
from .lp import derive_row_bounds
from .query import ConstraintSystem, Query, encode
from .relaxation import build_relaxation
from .network import Network
from .soi import SoiConfig, SoiOutcome, SoiStatus, minimize_soi

log = logging.getLogger("soiverify.search")


class Result(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"
    TIMEOUT = "timeout"


@dataclass
class SearchStats:
    nodes: int = 0
    lp_pivots: int = 0
    proposals: int = 0
    wall_time_s: float = 0.0


@dataclass
class Verdict:
    result: Result
    witness: np.ndarray | None
    stats: SearchStats
    trace: list[dict] | None = None


@dataclass(frozen=True)
class SearchConfig:
    soi: SoiConfig = field(default_factory=SoiConfig)
    gamma: float = 0.5          # EMA discount for pseudo-impact
    static_depth: int = 3       # static branching order while depth < this
    heuristic: str = "pi"       # pi | static
    timeout: float | None = None
    node_limit: int | None = None
    trace: bool = False
    reset_impacts_per_subtree: bool = False

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if self.static_depth < 0:
            raise ValueError("static_depth must be >= 0")
        if self.heuristic not in ("pi", "static"):
            raise ValueError(f"unknown heuristic {self.heuristic!r}")

    @property
    def strategy(self) -> str:
        return self.soi.strategy


@dataclass
class PseudoImpactTable:
    score: np.ndarray
    gamma: float

    @classmethod
    def zeros(cls, n_relus: int, gamma: float) -> "PseudoImpactTable":
        return cls(np.zeros(n_relus), gamma)


def update_pseudo_impact(table: PseudoImpactTable, relu: int, delta: float) -> None:
    """EMA update: score <- gamma * score + (1 - gamma) * delta."""
    if not np.isfinite(delta) or delta < 0:
        raise ValueError(f"bad impact delta {delta}")
    table.score[relu] = table.gamma * table.score[relu] + (1 - table.gamma) * delta


def pick_branch_relu(
    depth: int,
    free_relus: np.ndarray,
    table: PseudoImpactTable,
    cfg: SearchConfig,
    force_static: bool = False,
) -> int:
    """Static topological order while shallow, then argmax pseudo-impact
    with ties broken toward the topologically first ReLU."""
    if len(free_relus) == 0:
        raise ValueError("no free ReLU to branch on")
    if force_static or cfg.heuristic == "static" or depth < cfg.static_depth:
        return int(free_relus[0])
    scores = table.score[free_relus]
    return int(free_relus[int(np.argmax(scores))])


def split(fix: PhaseFixings, relu: int) -> tuple[PhaseFixings, PhaseFixings]:
    """Children covering the node exactly: the ReLU forced active
    (pre >= 0, post = pre) and forced inactive (pre <= 0, post = 0)."""
    return fix.with_phase(relu, ACTIVE), fix.with_phase(relu, INACTIVE)


class _Search:
    def __init__(self, net: Network, query: Query, cfg: SearchConfig):
        self.net = net
        self.cfg = cfg
        self.cs: ConstraintSystem = encode(net, query)
        self.box = query.input_box
        self.rng = np.random.default_rng(cfg.soi.seed)
        self.table = PseudoImpactTable.zeros(self.cs.index.n_relus, cfg.gamma)
        self.stats = SearchStats()
        self.trace: list[dict] | None = [] if cfg.trace else None
        self.deadline = None
        if cfg.timeout is not None:
            self.deadline = time.monotonic() + cfg.timeout

    def out_of_time(self) -> bool:
        return self.deadline is not None and time.monotonic() >= self.deadline

    def tighten(self, fix: PhaseFixings, inherited: BoundsMap | None, depth: int):
        """Propagate bounds and re-run after each newly detected fixing."""
        idx = self.cs.index
        for _ in range(idx.n_relus + 1):
            if depth == 0:
                bm = back_substitute(self.net, self.box, fix)
            else:
                bm = interval_propagate(self.net, self.box, fix)
            if inherited is not None:
                bm = bm.intersect(inherited)
            if bm.infeasible:
                return bm, fix
            new_fix = detect_fixed(bm, idx, fix)
            if new_fix == fix:
                return bm, fix
            fix = new_fix
        return bm, fix

    def visit(self, fix: PhaseFixings, inherited: BoundsMap | None, depth: int) -> tuple[Result, np.ndarray | None]:
        if self.out_of_time():
            return Result.TIMEOUT, None
        self.stats.nodes += 1
        if self.cfg.node_limit is not None and self.stats.nodes > self.cfg.node_limit:
            return Result.UNKNOWN, None

        bm, fix = self.tighten(fix, inherited, depth)
        if bm.infeasible:
            self._trace(depth, fix, "pruned-bounds", None)
            return Result.UNSAT, None

        # one round of row-implied tightening; children inherit the result
        build = build_relaxation(self.cs, bm, fix)
        bm_rows = derive_row_bounds(build.lp, bm)
        if bm_rows.infeasible:
            self._trace(depth, fix, "pruned-rows", None)
            return Result.UNSAT, None
        bm_struct = BoundsMap(
            bm_rows.lower[: self.cs.n_vars].copy(),
            bm_rows.upper[: self.cs.n_vars].copy(),
        )
        new_fix = detect_fixed(bm_struct, self.cs.index, fix)
        if new_fix != fix:
            bm_struct2, new_fix = self.tighten(new_fix, bm_struct, depth)
            if bm_struct2.infeasible:
                self._trace(depth, new_fix, "pruned-bounds", None)
                return Result.UNSAT, None
            fix, bm_struct = new_fix, bm_struct2

        outcome = minimize_soi(
            self.cs,
            bm_struct,
            fix,
            self.cfg.soi,
            rng=self.rng,
            deadline=self.deadline,
        )
        self.stats.lp_pivots += outcome.lp_pivots
        self.stats.proposals += outcome.proposals
        saved_scores = self.table.score.copy() if self.cfg.reset_impacts_per_subtree else None
        for relu, delta in outcome.impact_events:
            update_pseudo_impact(self.table, relu, delta)
        self._trace(depth, fix, outcome.status.value, outcome)

        if outcome.status is SoiStatus.SAT:
            return Result.SAT, outcome.witness
        if outcome.status is SoiStatus.UNSAT:
            return Result.UNSAT, None
        if self.out_of_time():
            return Result.TIMEOUT, None

        free = fix.free_indices()
        if len(free) == 0:
            # numerical corner: nothing left to split, answer unknown
            log.warning("inconclusive node with no free ReLU at depth %d", depth)
            return Result.UNKNOWN, None
        relu = pick_branch_relu(
            depth, free, self.table, self.cfg, force_static=outcome.numerical
        )
        active_first = True
        if outcome.best_pattern is not None and relu in outcome.best_pattern.relus:
            active_first = outcome.best_pattern.term_for(relu)
        child_active, child_inactive = split(fix, relu)
        order = (
            [child_active, child_inactive]
            if active_first
            else [child_inactive, child_active]
        )

        saw_unknown = False
        for child in order:
            res, witness = self.visit(child, bm_struct, depth + 1)
            if res is Result.SAT:
                return res, witness
            if res is Result.TIMEOUT:
                return res, None
            if res is Result.UNKNOWN:
                saw_unknown = True
        if saved_scores is not None:
            self.table.score = saved_scores
        if saw_unknown:
            return Result.UNKNOWN, None
        return Result.UNSAT, None

    def _trace(self, depth, fix, outcome_label, outcome: SoiOutcome | None):
        if self.trace is None:
            return
        rec = {
            "node": self.stats.nodes,
            "depth": depth,
            "free": int(len(fix.free_indices())),
            "outcome": outcome_label,
        }
        if outcome is not None:
            rec["best_cost"] = (
                None if outcome.best_cost == np.inf else float(outcome.best_cost)
            )
            rec["proposals"] = outcome.proposals
        self.trace.append(rec)


def complete_search(net: Network, query: Query, cfg: SearchConfig) -> Verdict:
    """Decide the query: SAT with a witness assignment, UNSAT, or a
    non-answer (timeout / budget / numerical trouble, never a wrong verdict)."""
    t0 = time.monotonic()
    search = _Search(net, query, cfg)
    root_fix = PhaseFixings.all_free(search.cs.index.n_relus)
    result, witness = search.visit(root_fix, None, 0)
    search.stats.wall_time_s = time.monotonic() - t0
    return Verdict(result, witness, search.stats, search.trace)
