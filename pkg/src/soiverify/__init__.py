"""Complete verifier for ReLU feed-forward networks.

Decides robustness queries by branch and bound over ReLU phases; each
search node minimizes a sum-of-infeasibilities cost over the triangle LP
relaxation with Metropolis-Hastings search, which both finds witnesses
and informs the branching order.
"""

from .bounds import (
    BoundsMap,
    PhaseFixings,
    back_substitute,
    detect_fixed,
    interval_propagate,
)
from .lp import LinearProgram, LpSolution, LpStatus, SimplexSolver, check_sat, opt_sat
from .network import (
    Activation,
    Layer,
    Network,
    NeuronValues,
    forward,
    load_network,
    parse_json,
    parse_nnet,
)
from .oracle import OracleVerdict, enumerate_patterns, random_falsify
from .query import (
    ConstraintSystem,
    LinearConstraint,
    Query,
    check_assignment,
    encode,
    load_query,
    targeted_robustness_query,
)
from .relaxation import RelaxationBuild, build_relaxation, triangle_coeffs
from .search import Result, SearchConfig, Verdict, complete_search
from .soi import PhasePattern, SoiConfig, SoiOutcome, SoiStatus, minimize_soi

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "BoundsMap",
    "ConstraintSystem",
    "Layer",
    "LinearConstraint",
    "LinearProgram",
    "LpSolution",
    "LpStatus",
    "Network",
    "NeuronValues",
    "OracleVerdict",
    "PhaseFixings",
    "PhasePattern",
    "Query",
    "RelaxationBuild",
    "Result",
    "SearchConfig",
    "SimplexSolver",
    "SoiConfig",
    "SoiOutcome",
    "SoiStatus",
    "Verdict",
    "back_substitute",
    "build_relaxation",
    "check_assignment",
    "check_sat",
    "complete_search",
    "detect_fixed",
    "encode",
    "enumerate_patterns",
    "forward",
    "interval_propagate",
    "load_network",
    "load_query",
    "minimize_soi",
    "opt_sat",
    "parse_json",
    "parse_nnet",
    "random_falsify",
    "targeted_robustness_query",
    "triangle_coeffs",
]
