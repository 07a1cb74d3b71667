"""Ground-truth decision procedures for small instances.

The enumerator tries every full activation pattern as a phase-fixed LP;
it is exponential by construction and guarded accordingly, but exact,
which makes it the reference the search engine is validated against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import ACTIVE, INACTIVE, BoundsMap, PhaseFixings, detect_fixed, interval_propagate
from .lp import LpStatus, check_sat
from .network import Network, forward
from .query import ConstraintSystem, Query, check_assignment, forward_assignment, holds_output_constraints
from .relaxation import build_relaxation

WITNESS_TOL = 1e-6
MAX_FREE = 20


@dataclass
class OracleVerdict:
    sat: bool
    witness: np.ndarray | None
    patterns_checked: int


def enumerate_patterns(
    cs: ConstraintSystem,
    bm: BoundsMap,
    net: Network | None = None,
    box=None,
) -> OracleVerdict:
    """Try the phase-fixed LP of every activation pattern over the free
    ReLUs, in Gray-code order so consecutive patterns differ by one flip.

    Passing the network enables a cheap interval prescreen per pattern,
    which only skips LPs whose bound propagation already crosses.
    """
    if bm.infeasible:
        return OracleVerdict(False, None, 0)
    idx = cs.index
    base = detect_fixed(bm, idx)
    free = base.free_indices()
    if len(free) > MAX_FREE:
        raise ValueError(f"{len(free)} free ReLUs exceed the oracle guard ({MAX_FREE})")
    n_patterns = 1 << len(free)
    checked = 0
    if box is None and net is not None:
        box = np.stack(
            [bm.lower[idx.input_ids], bm.upper[idx.input_ids]], axis=1
        )
    for i in range(n_patterns):
        gray = i ^ (i >> 1)
        status = base.status.copy()
        for pos, relu in enumerate(free):
            status[relu] = ACTIVE if (gray >> pos) & 1 else INACTIVE
        fixing = PhaseFixings(status)
        checked += 1
        if net is not None:
            probe = interval_propagate(net, box, fixing)
            if probe.infeasible:
                continue
        build = build_relaxation(cs, bm, fixing)
        sol = check_sat(build.lp)
        if sol.status is LpStatus.FEASIBLE:
            alpha = sol.assignment[: cs.n_vars]
            if not check_assignment(cs, alpha, WITNESS_TOL):
                raise RuntimeError(
                    "phase-fixed LP solution failed the exact check; "
                    "oracle integrity violated"
                )
            return OracleVerdict(True, alpha, checked)
        if sol.status is not LpStatus.INFEASIBLE:
            raise RuntimeError(f"oracle LP returned {sol.status} on a pattern")
    return OracleVerdict(False, None, checked)


def random_falsify(
    net: Network, query: Query, samples: int, rng: np.random.Generator
) -> np.ndarray | None:
    """Uniform sampling in the input box; returns the full assignment of
    the first sampled point that violates the property, else None."""
    lo = query.input_box[:, 0]
    hi = query.input_box[:, 1]
    from .query import encode

    cs = encode(net, query)
    for _ in range(samples):
        x = rng.uniform(lo, hi)
        values = forward(net, x)
        if holds_output_constraints(query, values.output):
            return forward_assignment(cs, values)
    return None
