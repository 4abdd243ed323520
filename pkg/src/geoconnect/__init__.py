"""Geodesic connectedness of split spacetimes S x R and generalized plane waves."""
from .action import DiscretePath, EndpointPair
from .connect import ConnectConfig, ConnectVerdict, check_condition_ii, connect, sweep
from .fieldlang import FieldExpr, parse
from .geometry import MetricModel, builtin_model, make_model
from .gpw import GpwModel, gpw_connect, make_gpw, oscillator
from .obstruction import certify
from .scenario import Scenario, load_scenario
from .spacetime import SpacetimeModel

__version__ = "0.1.0"

__all__ = [
    "ConnectConfig",
    "ConnectVerdict",
    "DiscretePath",
    "EndpointPair",
    "FieldExpr",
    "GpwModel",
    "MetricModel",
    "Scenario",
    "SpacetimeModel",
    "builtin_model",
    "certify",
    "check_condition_ii",
    "connect",
    "gpw_connect",
    "load_scenario",
    "make_gpw",
    "make_model",
    "oscillator",
    "parse",
    "sweep",
]
