"""Triangle relaxation of the exact query over current bounds and phases.

Every unstable ReLU contributes three linear constraints: post >= 0
(kept as a variable bound), post >= pre, and the sloped upper cut
post <= u/(u-l) * pre - u*l/(u-l). Fixed ReLUs are encoded exactly:
an equality row for the active phase, a pinned-to-zero post variable
for the inactive phase. Inequalities become equality rows with bounded
slack columns so the whole build is one equality-form LP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import ACTIVE, FREE, INACTIVE, BoundsMap, PhaseFixings
from .lp import LinearProgram
from .query import ConstraintSystem


def triangle_coeffs(l: float, u: float) -> tuple[float, float]:
    """Slope and intercept of the upper cut for pre-activation bounds [l, u]."""
    if not l < u:
        raise ValueError(f"degenerate bounds l={l}, u={u}")
    if not (l < 0.0 < u):
        raise ValueError(f"triangle needs l < 0 < u, got [{l}, {u}]")
    slope = u / (u - l)
    return slope, -u * l / (u - l)


@dataclass
class RelaxationBuild:
    lp: LinearProgram
    relu_row_index: dict[int, list[int]]  # relu -> its relaxation row ids
    n_structural: int


def _expr_interval(coeffs: dict[int, float], lo: np.ndarray, hi: np.ndarray):
    a = b = 0.0
    for v, c in coeffs.items():
        if c > 0:
            a += c * lo[v]
            b += c * hi[v]
        else:
            a += c * hi[v]
            b += c * lo[v]
    return a, b


def _add_inequality(lp, coeffs, sense, bound, lo, hi):
    """Encode sum(coeffs) <sense> bound as an equality row with a slack."""
    if sense == "=":
        return lp.add_row(coeffs, bound)
    e_lo, e_hi = _expr_interval(coeffs, lo, hi)
    if sense == "<=":
        s = lp.add_var(e_lo if np.isfinite(e_lo) else -np.inf, bound)
    else:
        s = lp.add_var(bound, e_hi if np.isfinite(e_hi) else np.inf)
    row = dict(coeffs)
    row[s] = -1.0
    return lp.add_row(row, 0.0)


def build_relaxation(
    cs: ConstraintSystem, bm: BoundsMap, fix: PhaseFixings
) -> RelaxationBuild:
    """Assemble the relaxation LP: affine rows, query rows, bounds from
    `bm`, and per-ReLU encodings according to `fix`."""
    idx = cs.index
    lo = np.maximum(bm.lower[: cs.n_vars], cs.lower)
    hi = np.minimum(bm.upper[: cs.n_vars], cs.upper)

    status = fix.status
    pre_ids = idx.relu_pre
    post_ids = idx.relu_post
    act = status == ACTIVE
    inact = status == INACTIVE
    lo[pre_ids[act]] = np.maximum(lo[pre_ids[act]], 0.0)
    lo[post_ids[act]] = np.maximum(lo[post_ids[act]], 0.0)
    hi[pre_ids[inact]] = np.minimum(hi[pre_ids[inact]], 0.0)
    lo[post_ids[inact]] = 0.0
    hi[post_ids[inact]] = 0.0

    lp = LinearProgram.with_bounds(lo, hi)
    for coeffs, rhs in cs.rows:
        lp.add_row(coeffs, rhs)
    for con in cs.extra:
        _add_inequality(lp, con.coeffs, con.sense, con.bound, lo, hi)

    relu_rows: dict[int, list[int]] = {}
    for r in range(idx.n_relus):
        pre = int(pre_ids[r])
        post = int(post_ids[r])
        if status[r] == ACTIVE:
            relu_rows[r] = [lp.add_row({post: 1.0, pre: -1.0}, 0.0)]
        elif status[r] == INACTIVE:
            relu_rows[r] = []  # fully expressed through the pinned bounds
        else:
            slope, intercept = triangle_coeffs(float(lo[pre]), float(hi[pre]))
            r1 = _add_inequality(lp, {post: 1.0, pre: -1.0}, ">=", 0.0, lo, hi)
            r2 = _add_inequality(
                lp, {post: 1.0, pre: -slope}, "<=", intercept, lo, hi
            )
            relu_rows[r] = [r1, r2]
    return RelaxationBuild(lp=lp, relu_row_index=relu_rows, n_structural=cs.n_vars)
