"""mvsde: interacting-particle solver and numerical verifier for
multivalued mean-field (McKean-Vlasov) SDEs.

The drift contains a set-valued maximal monotone term handled by
resolvent splitting; the coefficients depend on the law of the solution,
approximated by the empirical measure of an exchangeable particle
ensemble.  Submodules:

* :mod:`mvsde.operators`  -- resolvent-based operator catalog and path
  admissibility diagnostics,
* :mod:`mvsde.measures`   -- empirical measures, moments, transport
  distance surrogates, measure flows,
* :mod:`mvsde.solver`     -- splitting scheme, frozen-flow runs, the
  fixed-point (Picard) iteration on measure flows, contraction probes,
* :mod:`mvsde.calculus`   -- test functions with measure derivatives,
  the mean-field generator, the change-of-variables residual harness,
* :mod:`mvsde.stability`  -- Lyapunov dissipativity, moment-decay and
  ultimate-boundedness bounds, tail-fraction stability estimates,
* :mod:`mvsde.scenarios`  -- named presets wiring the above together,
* :mod:`mvsde.cli`        -- batch front end with reproducible outputs.
"""

from . import calculus, measures, operators, scenarios, solver, stability
from .errors import (
    CoefficientBlowup,
    ConfigError,
    DegenerateFit,
    DegenerateSet,
    DimensionMismatch,
    GridMismatch,
    IndexOutOfRange,
    LengthMismatch,
    MissingMetadata,
    MvsdeError,
    NonFinite,
    NotConverged,
    SizeMismatch,
    StateBlowup,
    ZeroDenominator,
)
from .measures import (
    EmpiricalMeasure,
    MeasureFlow,
    coupled_moment_distance,
    flow_distance,
    rho_upper,
    second_moment_norm,
)
from .operators import MonotoneOperator, resolve, yosida
from .solver import Coefficients, SchemeConfig, TrajectoryRecord, picard, simulate, solve_frozen_flow
from .stability import LyapunovSpec

__version__ = "0.1.0"
