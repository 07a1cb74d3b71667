"""Shared fixtures and reference constructions for the test suite."""

import numpy as np
import pytest

import soiverify as sv
from soiverify.bounds import PhaseFixings, back_substitute
from soiverify.oracle import enumerate_patterns

RELU_IDENTITY_JSON = (
    '{"layers":[{"weights":[[1.0]],"biases":[0.0],"activation":"relu"},'
    '{"weights":[[1.0]],"biases":[0.0],"activation":"identity"}]}'
)


@pytest.fixture
def relu_identity_net():
    """y = relu(x): one hidden neuron, identity output."""
    return sv.parse_json(RELU_IDENTITY_JSON)


def make_relu_identity():
    return sv.parse_json(RELU_IDENTITY_JSON)


def make_gap_instance():
    """Exactly unsatisfiable query whose triangle relaxation is feasible.

    Hidden layer h = relu(x), g = relu(-x), k = relu(x) over x in
    [-0.3, 0.3]; requiring h >= 0.1, g >= 0.1, k >= 0.05 needs both
    x >= 0.1 and x <= -0.1. All three ReLUs stay unstable.
    """
    net = sv.Network(
        (
            sv.Layer(np.array([[1.0], [-1.0], [1.0]]), np.zeros(3), sv.Activation.RELU),
            sv.Layer(np.eye(3), np.zeros(3), sv.Activation.IDENTITY),
        )
    )
    query = sv.Query(
        [[-0.3, 0.3]],
        (
            sv.LinearConstraint({0: 1.0}, ">=", 0.1),
            sv.LinearConstraint({1: 1.0}, ">=", 0.1),
            sv.LinearConstraint({2: 1.0}, ">=", 0.05),
        ),
    )
    return net, query


def oracle_decides(net, query):
    """Ground-truth verdict via exhaustive pattern enumeration."""
    cs = sv.encode(net, query)
    fix = PhaseFixings.all_free(cs.index.n_relus)
    bm = back_substitute(net, query.input_box, fix)
    if bm.infeasible:
        return False, None
    verdict = enumerate_patterns(cs, bm, net=net, box=query.input_box)
    return verdict.sat, verdict.witness


def root_state(net, query):
    """(cs, bm, fix) at the root of the search, before any branching."""
    cs = sv.encode(net, query)
    fix = PhaseFixings.all_free(cs.index.n_relus)
    bm = back_substitute(net, query.input_box, fix)
    return cs, bm, fix


def relaxation_point_feasible(build, alpha, tol=1e-9):
    """Whether a structural assignment extends to a feasible LP point.

    Rows without a slack column must hold with equality; rows with one
    determine their slack value uniquely, which must lie within the
    slack's bounds.
    """
    lp = build.lp
    n = build.n_structural
    for coeffs, rhs in lp.rows:
        structural = 0.0
        slack = None
        for v, c in coeffs.items():
            if v < n:
                structural += c * alpha[v]
            else:
                slack = (v, c)
        if slack is None:
            if abs(structural - rhs) > tol:
                return False
        else:
            v, c = slack
            s_val = (rhs - structural) / c
            if s_val < lp.col_lower[v] - tol or s_val > lp.col_upper[v] + tol:
                return False
    for v in range(n):
        if alpha[v] < lp.col_lower[v] - tol or alpha[v] > lp.col_upper[v] + tol:
            return False
    return True


def batch_outputs(net, xs):
    """Vectorized forward over rows of xs (used by test oracles only)."""
    cur = np.asarray(xs, dtype=np.float64)
    for layer in net.layers:
        z = cur @ layer.weights.T + layer.biases
        if layer.activation is sv.Activation.RELU:
            cur = np.maximum(z, 0.0)
        else:
            cur = z
    return cur
