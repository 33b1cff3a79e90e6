"""Safety-critical MPC with a terminal control-barrier-function constraint.

Library layout:

* :mod:`mpcmci.dynamics` -- discrete-time plants (unicycle, double integrator)
* :mod:`mpcmci.safety` -- distance/barrier pairs, recovery laws, sweeps
* :mod:`mpcmci.ocp` -- multiple-shooting transcriptions of the formulations
* :mod:`mpcmci.solver` -- augmented-Lagrangian solver and feasibility phase
* :mod:`mpcmci.analysis` -- experiment drivers (grids, tracking, reachability)
* :mod:`mpcmci.cli` -- command-line entry point emitting CSV/JSON artifacts
"""

from .dynamics import (
    ControlBounds,
    Plant,
    PLANT_REGISTRY,
    make_double_integrator,
    make_plant,
    make_unicycle,
    simulate,
    step,
)
from .safety import (
    CbfCheckReport,
    CircularObstacleSafety,
    ClearanceSafety1d,
    ObstacleSpec,
    SafetySpec,
    check_cbf_descent,
    check_compatibility,
    double_integrator_safety,
    sample_states,
    unicycle_safety,
)
from .ocp import (
    CostSpec,
    FormulationParams,
    InfeasibleStartError,
    OcpProblem,
    ScalarStateFn,
    WarmStart,
    build_problem,
    cold_start,
    max_violation,
    shift_warm_start,
    start_from_controls,
)
from .solver import (
    SolveResult,
    SolverConfig,
    check_derivatives,
    feasibility_phase,
    solve,
)

__version__ = "0.1.0"
