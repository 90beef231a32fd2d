"""Energy-shaping matching controllers for the ball-and-beam with a crank linkage."""

from .analysis import (
    BasinResult,
    LinearizationResult,
    StabilityReport,
    basin_estimate,
    fit_linear_gains,
    linearize,
    open_loop_linearization,
    stability_conditions,
)
from .config import RunConfig, load_config, parse_config
from .controller import ControlBreakdown, LinearGains, control, target_accel
from .errors import (
    ConfigError,
    FitError,
    GeneratorError,
    LinkageDomainError,
    NonEquilibriumError,
    SingularityError,
)
from .family import (
    FamilySpec,
    GeneratorSpec,
    MatchingResiduals,
    chat,
    ghat_at,
    matching_residuals,
    mu_sigma,
    psi,
    vhat_at,
    y_coord,
)
from .plant import (
    Metric2,
    PlantParams,
    State,
    alpha,
    christoffel_g,
    kinetic_metric,
    open_loop_rhs,
    potential,
    total_energy,
)
from .sim import NONLINEAR, OPEN_LOOP, SimConfig, Termination, Trajectory, hhat, hhat_rate_identity, simulate

__version__ = "0.1.0"
