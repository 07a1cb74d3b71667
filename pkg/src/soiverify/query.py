"""Verification queries and their exact constraint-system encoding.

A query is an input box together with a conjunction of linear output
constraints describing the *violation* of the property under check. The
encoder turns network and query into the exact satisfiability problem:
one affine equality per non-input neuron, one ReLU pairing per hidden
neuron, box bounds on the inputs, and the query rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .network import Network, NeuronValues, VarIndex, trace_assignment

SENSES = ("<=", ">=", "=")


class QueryFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LinearConstraint:
    """Sparse linear constraint sum(coeffs[v] * x[v]) <sense> bound."""

    coeffs: dict[int, float]
    sense: str
    bound: float

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("constraint needs at least one coefficient")
        if self.sense not in SENSES:
            raise ValueError(f"sense must be one of {SENSES}, got {self.sense!r}")
        if not np.isfinite(self.bound) or not all(
            np.isfinite(c) for c in self.coeffs.values()
        ):
            raise ValueError("non-finite constraint data")

    def holds(self, values: np.ndarray, tol: float) -> bool:
        lhs = sum(c * values[v] for v, c in self.coeffs.items())
        if self.sense == "<=":
            return lhs <= self.bound + tol
        if self.sense == ">=":
            return lhs >= self.bound - tol
        return abs(lhs - self.bound) <= tol


@dataclass(frozen=True)
class Query:
    """Input box plus output constraints encoding the property violation.

    Output constraint coefficients are keyed by output neuron index.
    """

    input_box: np.ndarray  # shape (input_dim, 2)
    output_constraints: tuple[LinearConstraint, ...]

    def __post_init__(self):
        box = np.array(self.input_box, dtype=np.float64)
        if box.ndim != 2 or box.shape[1] != 2:
            raise ValueError(f"input box must have shape (d, 2), got {box.shape}")
        if not np.isfinite(box).all():
            raise ValueError("input box must be finite")
        if (box[:, 0] > box[:, 1]).any():
            raise ValueError("input box has lo > hi")
        if not self.output_constraints:
            raise ValueError("need at least one output constraint")
        box.setflags(write=False)
        object.__setattr__(self, "input_box", box)
        object.__setattr__(self, "output_constraints", tuple(self.output_constraints))

    @property
    def input_dim(self) -> int:
        return self.input_box.shape[0]


def targeted_robustness_query(
    net: Network,
    x0,
    eps: float,
    true_label: int,
    target_label: int,
    domain=(0.0, 1.0),
    margin: float = 0.0,
) -> Query:
    """Query satisfiable iff some x with |x - x0|_inf <= eps (clipped to the
    input domain) scores the target label at least `margin` above the true
    label."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (net.input_dim,):
        raise ValueError(f"x0 shape {x0.shape}, expected ({net.input_dim},)")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if true_label == target_label:
        raise ValueError("target label must differ from true label")
    for lab in (true_label, target_label):
        if not (0 <= lab < net.output_dim):
            raise ValueError(f"label {lab} out of range for {net.output_dim} outputs")
    dom = np.asarray(domain, dtype=np.float64)
    if dom.ndim == 1:
        dom = np.tile(dom, (net.input_dim, 1))
    lo = np.maximum(x0 - eps, dom[:, 0])
    hi = np.minimum(x0 + eps, dom[:, 1])
    constraint = LinearConstraint(
        coeffs={target_label: 1.0, true_label: -1.0}, sense=">=", bound=margin
    )
    return Query(np.stack([lo, hi], axis=1), (constraint,))


@dataclass
class ConstraintSystem:
    """The exact query over network variables (see VarIndex for ids)."""

    index: VarIndex
    rows: list[tuple[dict[int, float], float]]
    relu_pairs: list[tuple[int, int]]  # (pre id, post id) per hidden neuron
    lower: np.ndarray
    upper: np.ndarray
    extra: tuple[LinearConstraint, ...]  # over variable ids

    @property
    def n_vars(self) -> int:
        return self.index.n_vars


def encode(net: Network, query: Query) -> ConstraintSystem:
    """Build the exact constraint system for `query` on `net`."""
    if query.input_dim != net.input_dim:
        raise ValueError("query input box does not match network input size")
    idx = VarIndex(net)
    rows: list[tuple[dict[int, float], float]] = []
    for ell, layer in enumerate(net.layers):
        prev_post = idx.post_ids[ell]
        pre = idx.pre_ids[ell]
        for i in range(layer.out_dim):
            coeffs = {int(pre[i]): 1.0}
            for j in range(layer.in_dim):
                w = layer.weights[i, j]
                if w != 0.0:
                    coeffs[int(prev_post[j])] = -float(w)
            rows.append((coeffs, float(layer.biases[i])))

    lower = np.full(idx.n_vars, -np.inf)
    upper = np.full(idx.n_vars, np.inf)
    lower[idx.input_ids] = query.input_box[:, 0]
    upper[idx.input_ids] = query.input_box[:, 1]
    lower[idx.relu_post] = 0.0

    out_ids = idx.output_ids
    extra = []
    for con in query.output_constraints:
        mapped = {}
        for out_i, c in con.coeffs.items():
            if not (0 <= out_i < net.output_dim):
                raise ValueError(f"output index {out_i} out of range")
            mapped[int(out_ids[out_i])] = float(c)
        extra.append(LinearConstraint(mapped, con.sense, con.bound))

    relu_pairs = list(zip(idx.relu_pre.tolist(), idx.relu_post.tolist()))
    return ConstraintSystem(idx, rows, relu_pairs, lower, upper, tuple(extra))


def check_assignment(cs: ConstraintSystem, alpha: np.ndarray, tol: float) -> bool:
    """True iff `alpha` satisfies every row, ReLU pairing, bound, and query
    constraint within `tol`."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (cs.n_vars,):
        raise ValueError(
            f"assignment covers {alpha.shape} variables, expected ({cs.n_vars},)"
        )
    for coeffs, rhs in cs.rows:
        lhs = sum(c * alpha[v] for v, c in coeffs.items())
        if abs(lhs - rhs) > tol:
            return False
    for pre, post in cs.relu_pairs:
        if abs(alpha[post] - max(0.0, alpha[pre])) > tol:
            return False
    if (alpha < cs.lower - tol).any() or (alpha > cs.upper + tol).any():
        return False
    return all(con.holds(alpha, tol) for con in cs.extra)


def holds_output_constraints(query: Query, output: np.ndarray, tol: float = 0.0) -> bool:
    """Evaluate the query's output constraints directly on an output vector."""
    return all(con.holds(output, tol) for con in query.output_constraints)


def forward_assignment(cs: ConstraintSystem, values: NeuronValues) -> np.ndarray:
    return trace_assignment(cs.index, values)


# ---------------------------------------------------------------------------
# Query JSON
# ---------------------------------------------------------------------------

def query_from_json(text: str, net: Network) -> Query:
    """Parse a query file.

    Either the explicit form
      {"input_box": [[lo, hi], ...],
       "output_constraints": [{"coeffs": {"y0": 1, "y1": -1},
                               "sense": ">=", "bound": 0}]}
    or the convenience form
      {"robustness": {"x0": [...], "eps": e,
                      "true_label": i, "target_label": j}}
    with optional "domain" and "margin" keys.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise QueryFormatError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise QueryFormatError("query must be a JSON object")

    if "robustness" in doc:
        rob = doc["robustness"]
        for key in ("x0", "eps", "true_label", "target_label"):
            if key not in rob:
                raise QueryFormatError(f'robustness form: missing "{key}"')
        try:
            return targeted_robustness_query(
                net,
                rob["x0"],
                float(rob["eps"]),
                int(rob["true_label"]),
                int(rob["target_label"]),
                domain=rob.get("domain", (0.0, 1.0)),
                margin=float(rob.get("margin", 0.0)),
            )
        except ValueError as exc:
            raise QueryFormatError(str(exc)) from None

    if "input_box" not in doc or "output_constraints" not in doc:
        raise QueryFormatError('need "input_box" and "output_constraints"')
    constraints = []
    for i, spec in enumerate(doc["output_constraints"]):
        try:
            coeffs = {}
            for name, c in spec["coeffs"].items():
                if not name.startswith("y"):
                    raise QueryFormatError(
                        f"constraint {i}: coefficient key {name!r} must be y<index>"
                    )
                coeffs[int(name[1:])] = float(c)
            sense = spec["sense"]
            if sense == "==":
                sense = "="
            constraints.append(LinearConstraint(coeffs, sense, float(spec["bound"])))
        except (KeyError, ValueError, TypeError) as exc:
            raise QueryFormatError(f"constraint {i}: {exc}") from None
    try:
        return Query(np.array(doc["input_box"], dtype=np.float64), tuple(constraints))
    except ValueError as exc:
        raise QueryFormatError(str(exc)) from None


def query_to_json(query: Query) -> str:
    doc = {
        "input_box": query.input_box.tolist(),
        "output_constraints": [
            {
                "coeffs": {f"y{i}": c for i, c in sorted(con.coeffs.items())},
                "sense": con.sense,
                "bound": con.bound,
            }
            for con in query.output_constraints
        ],
    }
    return json.dumps(doc)


def load_query(path: str, net: Network) -> Query:
    with open(path) as fh:
        return query_from_json(fh.read(), net)
