from utils.quadrature_utils import (
    QuadratureRule,
    PiecewiseRule,
    simpson_rule,
    breakpoint_rule,
    default_quadrature,
    default_node_count,
    refined,
)
from risk.risk_eval import (
    RiskBreakdown,
    EXACT,
    MONTE_CARLO,
    FAILED,
    failed_breakdown,
    bias_squared,
    variance_exact,
    excess_risk,
    risk_for_targets,
    monte_carlo_risk,
    population_bias,
)
