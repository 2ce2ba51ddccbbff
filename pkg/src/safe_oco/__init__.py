"""Safe online projected gradient descent under unknown linear constraints."""

from __future__ import annotations

from .algorithm import RegretTrace, RunConfig, ogd_step, resolve_tuning, run
from .environment import Environment, Scenario, load_lbmp_csv, make_datacenter, make_f1, make_f2, make_f3
from .errors import (
    AggregationError,
    ConfigurationError,
    ConvergenceError,
    DataError,
    InfeasibleError,
    InvalidInputError,
    OutputExistsError,
    ParseError,
    SafeOCOError,
)
from .estimation import build_conservative_set, confidence_radius, fit_rls
from .exploration import BaselineSpec, compute_gamma, exploration_action, sample_zeta
from .geometry import AmbientSet, ShrunkPolytope, TruePolytope
from .projection import hindsight_optimum, project_conservative, project_polytope

__version__ = "0.1.0"
