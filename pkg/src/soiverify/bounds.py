"""Per-variable bound tightening under the input box and fixed ReLU phases.

Two passes are provided: plain interval arithmetic, and a tighter pass
that carries symbolic affine lower/upper bounding functions over the
inputs through every layer, relaxing each unstable ReLU with a sloped
upper function and a 0/1-slope lower function. The symbolic pass always
intersects with the interval result, so it is never looser.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Network, VarIndex

INFEAS_TOL = 1e-9

FREE = 0
ACTIVE = 1
INACTIVE = 2


@dataclass(frozen=True)
class PhaseFixings:
    """Per-ReLU phase status, indexed in topological ReLU order."""

    status: np.ndarray

    def __post_init__(self):
        st = np.array(self.status, dtype=np.int8)
        st.setflags(write=False)
        object.__setattr__(self, "status", st)

    @classmethod
    def all_free(cls, n_relus: int) -> "PhaseFixings":
        return cls(np.zeros(n_relus, dtype=np.int8))

    def with_phase(self, relu: int, phase: int) -> "PhaseFixings":
        st = self.status.copy()
        st[relu] = phase
        return PhaseFixings(st)

    def free_indices(self) -> np.ndarray:
        return np.flatnonzero(self.status == FREE)

    def fixed_count(self) -> int:
        return int(np.count_nonzero(self.status))

    def __eq__(self, other):
        return isinstance(other, PhaseFixings) and np.array_equal(
            self.status, other.status
        )


@dataclass
class BoundsMap:
    """Lower/upper bounds per variable id, with an infeasibility flag."""

    lower: np.ndarray
    upper: np.ndarray
    infeasible: bool = False

    def copy(self) -> "BoundsMap":
        return BoundsMap(self.lower.copy(), self.upper.copy(), self.infeasible)

    def intersect(self, other: "BoundsMap") -> "BoundsMap":
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        bad = self.infeasible or other.infeasible or bool((lo > hi + INFEAS_TOL).any())
        return BoundsMap(lo, hi, bad)


def _phase_clamp(pre_lo, pre_hi, status):
    """Apply fixed-phase constraints to pre-activation bounds in place."""
    active = status == ACTIVE
    inactive = status == INACTIVE
    pre_lo[active] = np.maximum(pre_lo[active], 0.0)
    pre_hi[inactive] = np.minimum(pre_hi[inactive], 0.0)
    return pre_lo, pre_hi


def interval_propagate(net: Network, box, fix: PhaseFixings) -> BoundsMap:
    """Layer-by-layer interval arithmetic under the given phase fixings."""
    idx = VarIndex(net)
    box = np.asarray(box, dtype=np.float64)
    lower = np.full(idx.n_vars, -np.inf)
    upper = np.full(idx.n_vars, np.inf)
    post_lo = box[:, 0].copy()
    post_hi = box[:, 1].copy()
    lower[idx.input_ids] = post_lo
    upper[idx.input_ids] = post_hi
    infeasible = bool((post_lo > post_hi + INFEAS_TOL).any())

    cursor = 0
    k = len(net.layers)
    for ell, layer in enumerate(net.layers):
        wp = np.maximum(layer.weights, 0.0)
        wn = np.minimum(layer.weights, 0.0)
        pre_lo = layer.biases + wp @ post_lo + wn @ post_hi
        pre_hi = layer.biases + wp @ post_hi + wn @ post_lo
        if ell < k - 1:
            status = fix.status[cursor : cursor + layer.out_dim]
            cursor += layer.out_dim
            pre_lo, pre_hi = _phase_clamp(pre_lo, pre_hi, status)
            if (pre_lo > pre_hi + INFEAS_TOL).any():
                infeasible = True
            post_lo = np.maximum(pre_lo, 0.0)
            post_hi = np.maximum(pre_hi, 0.0)
            post_hi[status == INACTIVE] = 0.0
            post_lo = np.minimum(post_lo, post_hi)
            lower[idx.post_ids[ell + 1]] = post_lo
            upper[idx.post_ids[ell + 1]] = post_hi
        lower[idx.pre_ids[ell]] = pre_lo
        upper[idx.pre_ids[ell]] = pre_hi
    return BoundsMap(lower, upper, infeasible)


@dataclass
class _AffineForm:
    """Entrywise affine lower/upper bounding functions over the inputs."""

    lo_w: np.ndarray  # (n, d)
    lo_c: np.ndarray  # (n,)
    up_w: np.ndarray
    up_c: np.ndarray

    def concretize(self, box_lo, box_hi):
        lo = (
            np.maximum(self.lo_w, 0.0) @ box_lo
            + np.minimum(self.lo_w, 0.0) @ box_hi
            + self.lo_c
        )
        hi = (
            np.maximum(self.up_w, 0.0) @ box_hi
            + np.minimum(self.up_w, 0.0) @ box_lo
            + self.up_c
        )
        return lo, hi


def back_substitute(net: Network, box, fix: PhaseFixings) -> BoundsMap:
    """Symbolic affine bound propagation, intersected with intervals.

    Unstable ReLUs get the sloped upper function u/(u-l) * f + (-u*l/(u-l))
    and a lower function of slope 0 (when |l| >= u) or slope 1.
    """
    idx = VarIndex(net)
    box = np.asarray(box, dtype=np.float64)
    box_lo = box[:, 0].copy()
    box_hi = box[:, 1].copy()
    d = len(box_lo)
    lower = np.full(idx.n_vars, -np.inf)
    upper = np.full(idx.n_vars, np.inf)
    lower[idx.input_ids] = box_lo
    upper[idx.input_ids] = box_hi
    infeasible = bool((box_lo > box_hi + INFEAS_TOL).any())

    eye = np.eye(d)
    form = _AffineForm(eye.copy(), np.zeros(d), eye.copy(), np.zeros(d))
    post_lo = box_lo.copy()
    post_hi = box_hi.copy()

    cursor = 0
    k = len(net.layers)
    for ell, layer in enumerate(net.layers):
        wp = np.maximum(layer.weights, 0.0)
        wn = np.minimum(layer.weights, 0.0)
        pre_form = _AffineForm(
            wp @ form.lo_w + wn @ form.up_w,
            layer.biases + wp @ form.lo_c + wn @ form.up_c,
            wp @ form.up_w + wn @ form.lo_w,
            layer.biases + wp @ form.up_c + wn @ form.lo_c,
        )
        sym_lo, sym_hi = pre_form.concretize(box_lo, box_hi)
        # plain interval pass in parallel; keep the tighter of the two
        int_lo = layer.biases + wp @ post_lo + wn @ post_hi
        int_hi = layer.biases + wp @ post_hi + wn @ post_lo
        pre_lo = np.maximum(sym_lo, int_lo)
        pre_hi = np.minimum(sym_hi, int_hi)

        if ell < k - 1:
            n = layer.out_dim
            status = fix.status[cursor : cursor + n]
            cursor += n
            pre_lo, pre_hi = _phase_clamp(pre_lo, pre_hi, status)
            if (pre_lo > pre_hi + INFEAS_TOL).any():
                infeasible = True
            lower[idx.pre_ids[ell]] = pre_lo
            upper[idx.pre_ids[ell]] = pre_hi

            lo_w = np.zeros((n, d))
            lo_c = np.zeros(n)
            up_w = np.zeros((n, d))
            up_c = np.zeros(n)
            for i in range(n):
                l, u = pre_lo[i], pre_hi[i]
                if status[i] == INACTIVE or u <= 0.0:
                    continue  # zero functions
                if status[i] == ACTIVE or l >= 0.0:
                    lo_w[i] = pre_form.lo_w[i]
                    lo_c[i] = pre_form.lo_c[i]
                    up_w[i] = pre_form.up_w[i]
                    up_c[i] = pre_form.up_c[i]
                    continue
                slope = u / (u - l)
                up_w[i] = slope * pre_form.up_w[i]
                up_c[i] = slope * pre_form.up_c[i] - u * l / (u - l)
                if abs(l) < u:
                    lo_w[i] = pre_form.lo_w[i]
                    lo_c[i] = pre_form.lo_c[i]
                # else keep the zero lower function
            form = _AffineForm(lo_w, lo_c, up_w, up_c)
            sym_lo, sym_hi = form.concretize(box_lo, box_hi)
            int_post_lo = np.maximum(pre_lo, 0.0)
            int_post_hi = np.maximum(pre_hi, 0.0)
            int_post_hi[status == INACTIVE] = 0.0
            post_lo = np.maximum(np.maximum(sym_lo, 0.0), int_post_lo)
            post_hi = np.minimum(sym_hi, int_post_hi)
            post_hi = np.maximum(post_hi, 0.0)
            post_lo = np.minimum(post_lo, post_hi)
            lower[idx.post_ids[ell + 1]] = post_lo
            upper[idx.post_ids[ell + 1]] = post_hi
        else:
            lower[idx.pre_ids[ell]] = pre_lo
            upper[idx.pre_ids[ell]] = pre_hi
    return BoundsMap(lower, upper, infeasible)


def detect_fixed(
    bm: BoundsMap, idx: VarIndex, base: PhaseFixings | None = None
) -> PhaseFixings:
    """Phases implied by bounds: u <= 0 fixes inactive, l >= 0 fixes active.

    Fixings already present in `base` (branch decisions) are never undone.
    """
    if bm.infeasible:
        raise ValueError("detect_fixed on infeasible bounds")
    status = np.zeros(idx.n_relus, dtype=np.int8)
    pre_lo = bm.lower[idx.relu_pre]
    pre_hi = bm.upper[idx.relu_pre]
    status[pre_hi <= 0.0] = INACTIVE
    status[(status == FREE) & (pre_lo >= 0.0)] = ACTIVE
    if base is not None:
        keep = base.status != FREE
        status[keep] = base.status[keep]
    return PhaseFixings(status)
