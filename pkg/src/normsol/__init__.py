"""Normalized solutions of weakly coupled nonlinear Schrödinger systems on radial grids."""

from .continuation import (
    ContinuationConfig,
    DiagnosticsReport,
    HomotopyTrace,
    VerifyTolerances,
    auto_grid,
    continue_homotopy,
    init_state,
    newton_correct,
    verify_solution,
)
from .exceptions import (
    ChartError,
    ConfigError,
    ContinuationStall,
    ConvergenceError,
    DegenerateError,
    FormatError,
    GridError,
    HypothesisError,
    NormsolError,
    ShootingError,
    TruncationError,
)
from .geometry import Chart, degree_sign, lowest_tangent_basis, morse_index, stereo_fwd, stereo_inv, tangent_hessian
from .ground import GroundState, dilation_curve_check, pohozaev_ratio, rescale_ground, solve_omega0
from .radial import RadialField, RadialGrid, grad_norm_sq, integrate, make_grid
from .system import Regime, RegimeKind, SolutionState, SystemParams, jacobian, residual, validate_hypotheses

__version__ = "0.1.0"
