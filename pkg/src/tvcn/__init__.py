"""Window-based congestion control on evolving communication networks."""

from ._kernels import backend_name
from .control import (
    ControllerResult,
    ControllerState,
    UtilityParams,
    initial_windows,
    run_to_convergence,
    step_la,
    step_mo,
    step_proposed,
    utility,
    utility_double_prime,
    utility_prime,
    willingness_to_pay,
)
from .fluid import (
    FluidProblem,
    FluidSolution,
    backlog,
    mo_backlog,
    node_loads,
    queueing_delay_ratio,
    solve_fluid,
    solve_problem,
    transmission_delay,
)
from .graph import (
    EvolutionLog,
    EvolutionParams,
    NetworkSnapshot,
    anti_preferential_select,
    evolve,
    evolve_step,
    fit_power_law_exponent,
    link_capacity,
    new_seed_network,
    power_law_mle,
    preferential_probabilities,
    preferential_select,
)
from .harness import (
    ComparisonReport,
    Scenario,
    place_users,
    proportional_fairness_check,
    run_scenario,
    speedup_summary,
)
from .reporting import build_stability_report
from .routing import (
    Route,
    RoutingMatrix,
    bottleneck_set,
    build_routing_matrix,
    shortest_route,
)
from .stability import (
    StabilityReport,
    fd_jacobian,
    is_positive_definite,
    jacobian_f,
    jacobian_q,
    jacobian_x,
    lyapunov,
    q_matrix,
)

__version__ = "0.1.0"
