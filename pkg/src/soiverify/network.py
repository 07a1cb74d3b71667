"""Feed-forward ReLU network model, file parsers, and exact evaluation."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np


class Activation(enum.Enum):
    RELU = "relu"
    IDENTITY = "identity"


class ParseError(ValueError):
    """Malformed network input; carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # shape (out_dim, in_dim)
    biases: np.ndarray   # shape (out_dim,)
    activation: Activation

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.biases, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"weight matrix must be 2-d, got shape {w.shape}")
        if b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ValueError(
                f"bias length {b.shape} does not match weight rows {w.shape[0]}"
            )
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("layer sizes must be >= 1")
        if not np.isfinite(w).all() or not np.isfinite(b).all():
            raise ValueError("non-finite weight or bias entry")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Network:
    """Fully connected network: ReLU hidden layers, identity output layer."""

    layers: tuple[Layer, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if len(layers) < 2:
            raise ValueError("network needs at least one hidden layer")
        for i, layer in enumerate(layers[:-1]):
            if layer.activation is not Activation.RELU:
                raise ValueError(f"hidden layer {i} must use relu")
        if layers[-1].activation is not Activation.IDENTITY:
            raise ValueError("output layer must use identity")
        for prev, cur in zip(layers, layers[1:]):
            if cur.in_dim != prev.out_dim:
                raise ValueError(
                    f"layer input size {cur.in_dim} does not match "
                    f"preceding output size {prev.out_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(layer.out_dim for layer in self.layers[:-1])

    @property
    def relu_count(self) -> int:
        return sum(self.hidden_sizes)


@dataclass(frozen=True)
class NeuronValues:
    """Exact pre/post activation values from one forward evaluation.

    post[0] is the input vector; post[i] for 0 < i < len(layers) is the
    output of hidden layer i. pre[i] is the affine value of layer i+1
    counting from the first hidden layer; pre[-1] is the network output.
    """

    post: tuple[np.ndarray, ...]
    pre: tuple[np.ndarray, ...]

    @property
    def output(self) -> np.ndarray:
        return self.pre[-1]


class VarIndex:
    """Contiguous variable ids for a network's pre/post activation values.

    Layout: input post variables first, then per layer its pre variables
    followed by its post variables (the output layer has no post block).
    ReLUs are numbered in (layer, unit) order, which is the topological
    order used by branching.
    """

    def __init__(self, net: Network):
        sizes = [net.input_dim] + [layer.out_dim for layer in net.layers]
        self.layer_sizes = sizes
        k = len(net.layers)
        cursor = sizes[0]
        self.post_ids: list[np.ndarray] = [np.arange(sizes[0])]
        self.pre_ids: list[np.ndarray] = []
        relu_pre, relu_post, relu_layer = [], [], []
        for ell in range(1, k + 1):
            n = sizes[ell]
            pre = np.arange(cursor, cursor + n)
            cursor += n
            self.pre_ids.append(pre)
            if ell < k:
                post = np.arange(cursor, cursor + n)
                cursor += n
                self.post_ids.append(post)
                relu_pre.extend(pre)
                relu_post.extend(post)
                relu_layer.extend([ell] * n)
        self.n_vars = cursor
        self.relu_pre = np.asarray(relu_pre, dtype=np.int64)
        self.relu_post = np.asarray(relu_post, dtype=np.int64)
        self.relu_layer = np.asarray(relu_layer, dtype=np.int64)
        self.n_relus = len(relu_pre)

    @property
    def input_ids(self) -> np.ndarray:
        return self.post_ids[0]

    @property
    def output_ids(self) -> np.ndarray:
        return self.pre_ids[-1]


def forward(net: Network, x) -> NeuronValues:
    """Evaluate the network exactly, recording all pre/post values."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input shape {x.shape}, expected ({net.input_dim},)")
    if not np.isfinite(x).all():
        raise ValueError("non-finite input")
    post = [x]
    pre = []
    cur = x
    for layer in net.layers:
        z = layer.weights @ cur + layer.biases
        pre.append(z)
        if layer.activation is Activation.RELU:
            cur = np.maximum(z, 0.0)
            post.append(cur)
        else:
            cur = z
    return NeuronValues(post=tuple(post), pre=tuple(pre))


def trace_assignment(index: VarIndex, values: NeuronValues) -> np.ndarray:
    """Flatten a forward trace into a full variable assignment."""
    alpha = np.empty(index.n_vars)
    for ids, vec in zip(index.post_ids, values.post):
        alpha[ids] = vec
    for ids, vec in zip(index.pre_ids, values.pre):
        alpha[ids] = vec
    return alpha


# ---------------------------------------------------------------------------
# NNet subset (ACAS-style layout)
# ---------------------------------------------------------------------------

def _tokens(line: str) -> list[str]:
    return [t.strip() for t in line.split(",") if t.strip() != ""]


def _floats(line: str, lineno: int) -> list[float]:
    out = []
    for tok in _tokens(line):
        try:
            v = float(tok)
        except ValueError:
            raise ParseError(f"bad number {tok!r}", lineno) from None
        if not np.isfinite(v):
            raise ParseError(f"non-finite number {tok!r}", lineno)
        out.append(v)
    return out


def _ints(line: str, lineno: int) -> list[int]:
    out = []
    for tok in _tokens(line):
        try:
            out.append(int(tok))
        except ValueError:
            raise ParseError(f"bad integer {tok!r}", lineno) from None
    return out


def parse_nnet(text: str) -> Network:
    """Parse the fully connected NNet subset.

    Accepts leading `//` comments, the count header, the layer-sizes line,
    five legacy normalization lines (kept as metadata, never applied), then
    per layer the weight rows followed by the bias rows.
    """
    lines = text.splitlines()
    # (lineno, content) for lines that carry data
    data = [
        (i + 1, ln)
        for i, ln in enumerate(lines)
        if ln.strip() and not ln.lstrip().startswith("//")
    ]
    if not data:
        raise ParseError("empty input")
    pos = 0

    def next_line():
        nonlocal pos
        if pos >= len(data):
            raise ParseError("unexpected end of file", data[-1][0])
        item = data[pos]
        pos += 1
        return item

    lineno, header = next_line()
    head = _ints(header, lineno)
    if len(head) < 4:
        raise ParseError("header needs numLayers,inputSize,outputSize,maxLayerSize", lineno)
    n_layers, in_size, out_size, _max_size = head[:4]
    if n_layers < 2:
        raise ParseError("need at least one hidden layer", lineno)

    lineno, sizes_line = next_line()
    sizes = _ints(sizes_line, lineno)
    if len(sizes) != n_layers + 1:
        raise ParseError(
            f"expected {n_layers + 1} layer sizes, got {len(sizes)}", lineno
        )
    if sizes[0] != in_size or sizes[-1] != out_size:
        raise ParseError("layer sizes disagree with header", lineno)

    legacy = {}
    for name in ("flag", "mins", "maxes", "means", "ranges"):
        lineno, ln = next_line()
        legacy[name] = _floats(ln, lineno)

    layers = []
    for ell in range(1, n_layers + 1):
        rows = []
        for _ in range(sizes[ell]):
            lineno, ln = next_line()
            row = _floats(ln, lineno)
            if len(row) != sizes[ell - 1]:
                raise ParseError(
                    f"weight row has {len(row)} entries, expected {sizes[ell - 1]}",
                    lineno,
                )
            rows.append(row)
        biases = []
        for _ in range(sizes[ell]):
            lineno, ln = next_line()
            vals = _floats(ln, lineno)
            if len(vals) != 1:
                raise ParseError(f"bias line has {len(vals)} entries, expected 1", lineno)
            biases.append(vals[0])
        act = Activation.RELU if ell < n_layers else Activation.IDENTITY
        try:
            layers.append(Layer(np.array(rows), np.array(biases), act))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if pos < len(data):
        raise ParseError("trailing data after last bias", data[pos][0])
    try:
        return Network(tuple(layers), metadata={"nnet_legacy": legacy})
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def to_nnet(net: Network) -> str:
    sizes = [net.input_dim] + [layer.out_dim for layer in net.layers]
    out = ["// fully connected ReLU network"]
    out.append(f"{len(net.layers)},{net.input_dim},{net.output_dim},{max(sizes)},")
    out.append(",".join(str(s) for s in sizes) + ",")
    out.append("0,")
    zeros_in = ",".join("0.0" for _ in range(net.input_dim)) + ","
    out.append(zeros_in)  # mins
    out.append(zeros_in)  # maxes
    zeros_norm = ",".join("0.0" for _ in range(net.input_dim + 1)) + ","
    out.append(zeros_norm)  # means
    out.append(zeros_norm)  # ranges
    for layer in net.layers:
        for row in layer.weights:
            out.append(",".join(repr(float(v)) for v in row) + ",")
        for b in layer.biases:
            out.append(repr(float(b)) + ",")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# JSON format
# ---------------------------------------------------------------------------

_ACTIVATIONS = {"relu": Activation.RELU, "identity": Activation.IDENTITY}


def parse_json(text: str) -> Network:
    """Parse `{"layers":[{"weights":..,"biases":..,"activation":..}]}`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", exc.lineno) from None
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ParseError('missing top-level "layers" key')
    layers = []
    for i, spec in enumerate(doc["layers"]):
        for key in ("weights", "biases", "activation"):
            if key not in spec:
                raise ParseError(f'layer {i}: missing "{key}" key')
        act_name = spec["activation"]
        if act_name not in _ACTIVATIONS:
            raise ParseError(f"layer {i}: unsupported activation {act_name!r}")
        try:
            layers.append(
                Layer(
                    np.array(spec["weights"], dtype=np.float64),
                    np.array(spec["biases"], dtype=np.float64),
                    _ACTIVATIONS[act_name],
                )
            )
        except (ValueError, TypeError) as exc:
            raise ParseError(f"layer {i}: {exc}") from None
    try:
        return Network(tuple(layers))
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def to_json(net: Network) -> str:
    doc = {
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "biases": layer.biases.tolist(),
                "activation": layer.activation.value,
            }
            for layer in net.layers
        ]
    }
    return json.dumps(doc)


def load_network(path: str) -> Network:
    """Load a network file, dispatching on the .nnet / .json suffix."""
    with open(path) as fh:
        text = fh.read()
    if str(path).endswith(".nnet"):
        return parse_nnet(text)
    return parse_json(text)
