"""Power control for head-of-line-deadline packet streams over Markov interference.

Exact dynamic programming, the fixed-interference structural analysis, the
SLBPC heuristics and a seeded Monte Carlo simulator.
"""
from .analytics import (
    ConcaveEnvelope,
    SigmaBounds,
    SigmaTable,
    build_sigma,
    check_prop1,
    concave_envelope,
    gamma,
    semi_analytic_policy,
    sigma_bounds,
)
from .dp import PolicyTable, ValueTable, bellman_residual, greedy_policy, solve
from .model import (
    CostModel,
    InterferenceChain,
    LinearCost,
    PowerSet,
    State,
    SuccessFunction,
    SystemSpec,
    TableCost,
    stage_cost,
    step,
    success_prob,
)
from .policies import PolicyConfig
from .simulator import SimReport, TrajectoryRecord, run_batch, run_trajectory, validate_against_dp

__version__ = "0.1.0"
