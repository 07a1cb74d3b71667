"""Random instance generation for benchmarks and validation suites."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .network import Activation, Layer, Network, forward, to_json
from .query import Query, query_to_json, targeted_robustness_query


@dataclass
class Instance:
    name: str
    net: Network
    query: Query


def random_network(
    rng: np.random.Generator,
    input_dim: int,
    hidden_sizes,
    output_dim: int,
    weight_scale: float = 1.0,
) -> Network:
    """Fully connected net with weights and biases uniform in [-scale, scale]."""
    sizes = [input_dim, *hidden_sizes, output_dim]
    layers = []
    for i in range(1, len(sizes)):
        act = Activation.RELU if i < len(sizes) - 1 else Activation.IDENTITY
        w = rng.uniform(-weight_scale, weight_scale, size=(sizes[i], sizes[i - 1]))
        b = rng.uniform(-weight_scale, weight_scale, size=sizes[i])
        layers.append(Layer(w, b, act))
    return Network(tuple(layers))


def _random_shape(rng: np.random.Generator, min_relus=4, max_relus=12):
    """2 or 3 hidden layers totalling between min_relus and max_relus units."""
    n_hidden = int(rng.integers(2, 4))
    while True:
        sizes = [int(rng.integers(2, 5)) for _ in range(n_hidden)]
        if min_relus <= sum(sizes) <= max_relus:
            return sizes


def random_robustness_instance(
    rng: np.random.Generator,
    name: str,
    eps_choices=(0.05, 0.1, 0.3),
    runner_up_target: bool = False,
) -> Instance:
    input_dim = int(rng.integers(2, 5))
    output_dim = int(rng.integers(2, 4))
    net = random_network(rng, input_dim, _random_shape(rng), output_dim)
    x0 = rng.uniform(0.0, 1.0, size=input_dim)
    eps = float(rng.choice(eps_choices))
    scores = forward(net, x0).output
    if runner_up_target:
        true_label = int(np.argmax(scores))
        order = np.argsort(scores)
        target = int(order[-2])
    else:
        true_label = int(rng.integers(output_dim))
        others = [i for i in range(output_dim) if i != true_label]
        target = int(rng.choice(others))
    query = targeted_robustness_query(net, x0, eps, true_label, target)
    return Instance(name, net, query)


def generate_suite(
    seed: int,
    count: int,
    eps_choices=(0.05, 0.1, 0.3),
    runner_up_target: bool = False,
    prefix: str = "inst",
) -> list[Instance]:
    rng = np.random.default_rng(seed)
    return [
        random_robustness_instance(
            rng, f"{prefix}{i:04d}", eps_choices, runner_up_target
        )
        for i in range(count)
    ]


def sat_biased_suite(
    seed: int,
    count: int,
    sat_fraction: float = 0.7,
    eps_choices=(0.3, 0.5),
    prefix: str = "sb",
) -> list[Instance]:
    """Suite biased toward satisfiable instances by falsifier screening.

    Candidates whose query a quick uniform-sampling pass can already
    falsify are satisfiable for sure; the rest (mostly robust instances)
    fill the remaining slots.
    """
    from .oracle import random_falsify

    rng = np.random.default_rng(seed)
    want_sat = int(round(count * sat_fraction))
    sat_found: list[Instance] = []
    rest: list[Instance] = []
    attempts = 0
    while (len(sat_found) < want_sat or len(rest) < count - want_sat) and attempts < 100 * count:
        attempts += 1
        inst = random_robustness_instance(
            rng, f"{prefix}{attempts:05d}", eps_choices, runner_up_target=True
        )
        witness = random_falsify(inst.net, inst.query, 150, rng)
        if witness is not None and len(sat_found) < want_sat:
            sat_found.append(inst)
        elif witness is None and len(rest) < count - want_sat:
            rest.append(inst)
    suite = sat_found + rest
    order = rng.permutation(len(suite))
    return [suite[i] for i in order]


def write_suite(directory: str, instances: list[Instance]) -> None:
    """Materialize `<name>.net.json` / `<name>.query.json` pairs plus a
    manifest, the layout `bench` consumes."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for inst in instances:
        net_path = os.path.join(directory, f"{inst.name}.net.json")
        query_path = os.path.join(directory, f"{inst.name}.query.json")
        with open(net_path, "w") as fh:
            fh.write(to_json(inst.net))
        with open(query_path, "w") as fh:
            fh.write(query_to_json(inst.query))
        names.append(inst.name)
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump({"instances": names}, fh, indent=1)


def list_suite(directory: str) -> list[tuple[str, str, str]]:
    """(name, network path, query path) triples found in a suite directory."""
    manifest = os.path.join(directory, "manifest.json")
    if os.path.exists(manifest):
        with open(manifest) as fh:
            names = json.load(fh)["instances"]
    else:
        names = sorted(
            f[: -len(".query.json")]
            for f in os.listdir(directory)
            if f.endswith(".query.json")
        )
    out = []
    for name in names:
        query_path = os.path.join(directory, f"{name}.query.json")
        net_path = os.path.join(directory, f"{name}.net.json")
        if not os.path.exists(net_path):
            net_path = os.path.join(directory, f"{name}.nnet")
        out.append((name, net_path, query_path))
    return out
