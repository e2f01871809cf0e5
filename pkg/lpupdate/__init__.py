''' LP-update policies for average reward restless bandits. '''
# pylint: skip-file
__version__ = '0.1.0'

from .model import (
    RmabInstance,
    SystemState,
    BudgetMode,
    RmabError,
    InfeasibleControlError,
    InstanceFormatError,
    SolverError,
    DegenerateError,
    InstanceTooLargeError,
    validate,
    normalize,
    as_occupancy,
    check_control,
    drift,
    reward
)
from .lp import (
    LpSolution,
    HorizonPlan,
    FiniteHorizonSolver,
    solve_relaxation,
    solve_finite_horizon,
    lp_priority_index,
    export_lp
)
from .policies import (
    PolicyKind,
    ActionAllocation,
    FtvaState,
    CouplingPlan,
    round_control,
    lp_update_action,
    lp_priority_action,
    ftva_action,
    make_policy
)
from .analysis import (
    ErgodicityReport,
    StabilityReport,
    GapBound,
    StateClass,
    compute_rho,
    find_k,
    check_nondegenerate,
    build_p_star_and_spectrum,
    rotated_cost,
    min_rotated_cost,
    sample_feasible,
    horizon_cost,
    bias_cauchy_gap,
    theorem1_bound,
    lambda_bound_check,
    relaxation_is_unique,
    first_control_is_unique
)
from .oracle import exact_small_oracle
from .simulator import (
    SimConfig,
    InitialState,
    TrajectoryLog,
    GainEstimate,
    step,
    step_coupled,
    run_trajectory,
    run_replications,
    estimate_gain,
    summarize_trace
)
from .instances import (
    InstanceCatalogEntry,
    GoldenValues,
    builtin,
    catalog_ids,
    generate_random,
    random_references,
    load,
    save,
    resolve_reference
)
from .api import (
    ExperimentSpec,
    analyze,
    simulate_cell,
    run_experiment,
    trace,
    oracle_table
)
