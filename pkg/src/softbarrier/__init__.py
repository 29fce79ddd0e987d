"""Safety filtering for control-affine systems via backup-trajectory barriers.

The library wraps any desired feedback law with a minimum-intervention filter
built on soft-minimum / soft-maximum barrier functions evaluated along
finite-horizon predictions of one or more backup controllers. See README.md
for the scenario catalogue and the command-line interface.
"""

from ._accel import NUMBA_ENABLED
from .barrier import (
    BarrierEval,
    barrier_args,
    barrier_gradient_single,
    evaluate,
    fine_hstar_grid,
    hard_barrier_single,
    soft_barrier_grid,
    soft_barrier_multi,
    soft_barrier_single,
)
from .filter import (
    FilterConfig,
    FilterState,
    StepDiagnostics,
    augmented_backup,
    control_multi,
    control_single,
    default_config,
    gamma,
    index_set,
    sigma,
)
from .flow import FlowResult, HorizonGrid, NonFiniteStateError, flow_samples, integrate_flow
from .model import (
    BackupPolicy,
    ControlPolytope,
    SafetySpec,
    Scenario,
    SystemModel,
    build_pendulum_scenario,
    build_unicycle_scenario,
    csat,
    csat_constants,
)
from .optim import (
    InfeasibleError,
    beta_margin,
    enumerate_vertices,
    lp_max_linear,
    qp_min_intervention,
)
from .sim import (
    SimConfig,
    SimTrace,
    check_soft_under_hard,
    eps_floor,
    estimate_constants,
    metrics,
    resolve_eps,
    sample_states,
    simulate,
)
from .softnum import softmax, softmax_weights, softmin, softmin_weights

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED",
    "BarrierEval",
    "barrier_args",
    "barrier_gradient_single",
    "evaluate",
    "hard_barrier_single",
    "soft_barrier_grid",
    "soft_barrier_multi",
    "soft_barrier_single",
    "FilterConfig",
    "FilterState",
    "StepDiagnostics",
    "augmented_backup",
    "control_multi",
    "control_single",
    "default_config",
    "gamma",
    "index_set",
    "sigma",
    "FlowResult",
    "HorizonGrid",
    "NonFiniteStateError",
    "fine_hstar_grid",
    "flow_samples",
    "integrate_flow",
    "BackupPolicy",
    "ControlPolytope",
    "SafetySpec",
    "Scenario",
    "SystemModel",
    "build_pendulum_scenario",
    "build_unicycle_scenario",
    "csat",
    "csat_constants",
    "InfeasibleError",
    "beta_margin",
    "enumerate_vertices",
    "lp_max_linear",
    "qp_min_intervention",
    "SimConfig",
    "SimTrace",
    "check_soft_under_hard",
    "eps_floor",
    "estimate_constants",
    "sample_states",
    "metrics",
    "resolve_eps",
    "simulate",
    "softmax",
    "softmax_weights",
    "softmin",
    "softmin_weights",
    "__version__",
]
