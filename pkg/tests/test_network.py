import numpy as np
import pytest

import soiverify as sv
from soiverify.network import ParseError, parse_nnet, parse_json, to_json, to_nnet
from soiverify.gen import random_network

from conftest import make_relu_identity

MINIMAL_NNET = """\
// minimal single-neuron net
2,1,1,1,
1,1,1,
0,
0.0,
0.0,
0.0,0.0,
0.0,0.0,
1.0,
0.0,
1.0,
0.0,
"""


class TestNNetParser:
    def test_minimal_roundtrip(self):
        net = parse_nnet(MINIMAL_NNET)
        assert net.input_dim == 1 and net.output_dim == 1
        assert net.hidden_sizes == (1,)
        again = parse_nnet(to_nnet(net))
        assert again.hidden_sizes == net.hidden_sizes
        for a, b in zip(net.layers, again.layers):
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.biases, b.biases)

    def test_empty_input(self):
        with pytest.raises(ParseError):
            parse_nnet("")

    def test_dimension_mismatch_reports_line(self):
        # header declares 2 inputs but a weight row carries 3 entries
        bad = (
            "2,2,1,2,\n2,2,1,\n0,\n0,0,\n0,0,\n0,0,0,\n0,0,0,\n"
            "1,2,3,\n4,5,\n0,\n0,\n1,1,\n0,\n"
        )
        with pytest.raises(ParseError) as exc:
            parse_nnet(bad)
        assert "3 entries" in str(exc.value)
        assert exc.value.line == 8

    def test_non_finite_rejected(self):
        bad = MINIMAL_NNET.replace("1.0,\n0.0,\n1.0", "inf,\n0.0,\n1.0")
        with pytest.raises(ParseError):
            parse_nnet(bad)

    def test_random_roundtrip_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            net = random_network(rng, 3, [4, 2], 2)
            again = parse_nnet(to_nnet(net))
            for a, b in zip(net.layers, again.layers):
                assert np.array_equal(a.weights, b.weights)
                assert np.array_equal(a.biases, b.biases)


class TestJsonParser:
    def test_identity_through_relu(self):
        net = make_relu_identity()
        assert sv.forward(net, [0.5]).output[0] == pytest.approx(0.5)

    def test_missing_key(self):
        with pytest.raises(ParseError, match="biases"):
            parse_json('{"layers":[{"weights":[[1.0]],"activation":"relu"}]}')

    def test_unsupported_activation(self):
        text = (
            '{"layers":[{"weights":[[1.0]],"biases":[0.0],"activation":"maxpool"},'
            '{"weights":[[1.0]],"biases":[0.0],"activation":"identity"}]}'
        )
        with pytest.raises(ParseError, match="maxpool"):
            parse_json(text)

    def test_json_roundtrip(self):
        rng = np.random.default_rng(1)
        net = random_network(rng, 2, [3], 2)
        again = parse_json(to_json(net))
        for a, b in zip(net.layers, again.layers):
            assert np.array_equal(a.weights, b.weights)

    def test_structure_validation(self):
        with pytest.raises(ParseError):
            parse_json('{"layers":[{"weights":[[1.0]],"biases":[0.0],"activation":"identity"}]}')


class TestForward:
    def test_relu_clamps_negative(self):
        net = make_relu_identity()
        values = sv.forward(net, [-1.0])
        assert values.pre[0][0] == -1.0
        assert values.post[1][0] == 0.0
        assert values.output[0] == 0.0

    def test_identity_on_nonnegative(self):
        net = make_relu_identity()
        values = sv.forward(net, [0.7])
        assert values.pre[0][0] == pytest.approx(0.7)
        assert values.output[0] == pytest.approx(0.7)

    def test_dimension_mismatch(self):
        net = make_relu_identity()
        with pytest.raises(ValueError):
            sv.forward(net, [0.1, 0.2])

    def test_trace_consistent_with_encoding(self):
        # forward traces satisfy the exact system once query rows are dropped
        rng = np.random.default_rng(7)
        for _ in range(20):
            net = random_network(rng, 3, [4, 3], 2)
            query = sv.Query(
                [[0, 1]] * 3, (sv.LinearConstraint({0: 1.0}, ">=", -1e9),)
            )
            cs = sv.encode(net, query)
            for _ in range(5):
                x = rng.uniform(0, 1, 3)
                alpha = sv.query.forward_assignment(cs, sv.forward(net, x))
                assert sv.check_assignment(cs, alpha, 1e-9)

    def test_post_never_negative(self):
        rng = np.random.default_rng(9)
        net = random_network(rng, 2, [5, 4], 2, weight_scale=2.0)
        for _ in range(200):
            values = sv.forward(net, rng.uniform(-3, 3, 2))
            for post in values.post[1:]:
                assert (post >= 0).all()

    def test_piecewise_linear_on_stable_segments(self):
        rng = np.random.default_rng(11)
        net = random_network(rng, 2, [4, 3], 2, weight_scale=2.0)
        checked = 0
        while checked < 50:
            a = rng.uniform(0, 1, 2)
            b = a + rng.uniform(-0.05, 0.05, 2)
            pats = []
            for theta in (0.0, 0.5, 1.0):
                values = sv.forward(net, theta * a + (1 - theta) * b)
                pats.append(tuple((p >= 0).tolist() for p in values.pre[:-1]))
            if pats[0] != pats[1] or pats[1] != pats[2]:
                continue
            fa = sv.forward(net, a).output
            fb = sv.forward(net, b).output
            mid = sv.forward(net, 0.5 * a + 0.5 * b).output
            assert np.allclose(mid, 0.5 * fa + 0.5 * fb, atol=1e-9)
            checked += 1


def test_layer_invariants():
    with pytest.raises(ValueError):
        sv.Layer(np.array([[np.nan]]), np.array([0.0]), sv.Activation.RELU)
    with pytest.raises(ValueError):
        sv.Layer(np.ones((2, 2)), np.ones(3), sv.Activation.RELU)


def test_network_needs_hidden_layer():
    with pytest.raises(ValueError):
        sv.Network((sv.Layer(np.eye(2), np.zeros(2), sv.Activation.IDENTITY),))
