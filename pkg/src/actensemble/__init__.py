"""Activation-ensemble networks built from scratch on numpy."""

from .activations import ActivationFn, ActivationSet, builtin_set
from .ensemble import EnsembleLayer, EnsembleParams, RunningRange
from .network import Network, NetworkSpec, parse_spec
from .simplex import project, project_oracle, project_rows

__all__ = [
    "ActivationFn",
    "ActivationSet",
    "EnsembleLayer",
    "EnsembleParams",
    "Network",
    "NetworkSpec",
    "RunningRange",
    "builtin_set",
    "parse_spec",
    "project",
    "project_oracle",
    "project_rows",
]

__version__ = "0.1.0"
