"""Perishable inventory simulation, analytic cost bounds, and policy
optimization for periodic-review systems with lost sales, batching, lead
times, and yield uncertainty."""

from .bounds import (
    BoundContext,
    bounds_report,
    excess_loss,
    normal_loss,
    out_lb,
    out_lb_argmin,
    out_ub,
    out_ub_argmin,
    pil_lb,
    pil_ub,
    pil_ub_argmin,
    search_interval,
)
from .demand import (
    DemandScenario,
    LifecycleConfig,
    NoiseModel,
    lifecycle_forecast,
    load_forecast,
    sample_demand_path,
    save_forecast,
)
from .env import (
    CostRates,
    Environment,
    EnvParams,
    EpisodeLedger,
    InventoryState,
    PeriodOutcome,
    batch_order_cost,
    draw_yield,
    transform_costs,
)
from .evaluator import (
    EvalConfig,
    EvalResult,
    SearchResult,
    compare,
    evaluate,
    evaluate_policies,
    optimize_parameter,
    run_episode,
)
from .policies import (
    PlannerPolicy,
    OutPolicy,
    PilPolicy,
    Policy,
    RandomPolicy,
    ReplayPolicy,
    planner_expired_estimate,
    planner_order,
    planner_static_plan,
    planner_safety_stock,
    estimate_projected_adjustment,
    make_policy,
    out_order,
    pil_order,
)
from .bridge import (
    ProtocolSession,
    handle_message,
    load_action_trace,
    make_observation,
    project_inventory,
    save_action_trace,
)

__version__ = "0.1.0"
