"""Calabi flow on flat complex tori of dimension one and two.

Spectral discretisation of ``dphi/dt = R_phi - Rbar`` with an exponential
bilaplacian splitting, per-step Picard iteration, curvature and Hölder-norm
diagnostics, and packaged experiments.
"""

from .config import ConfigError, ModeSpec, RunConfig, parse_config
from .curvature import average_scalar, calabi_energy, riemann_norm, scalar_curvature
from .experiments import EXPERIMENTS, ExperimentResult
from .flow import (
    CalabiFlow,
    ContractionFailure,
    DiagnosticsRow,
    FlowState,
    FlowStatus,
    PositivityBreakdown,
    StepControls,
    forcing,
    forcing_expanded,
    picard_step,
    run_flow,
)
from .lattice import TorusLattice, forward_transform, inverse_transform
from .metric import InvalidMetricError, MetricField, ReferenceGeometry, assemble_metric
from .norms import HolderParams, holder_norm
from .semigroup import build_symbol, duhamel_phi1, semigroup_apply

__version__ = "0.1.0"
