"""Entropic optimal transport: scaling, greedy, accelerated and primal-dual solvers."""
from .accel import AccelState, gandkhorn, randkhorn, theta_next
from .apd import (
    ApdState,
    DualProblem,
    MirrorMap,
    apdagd,
    apdamd,
    approx_ot_apdagd,
    approx_ot_apdamd,
    ot_dual_problem,
    x_of_lambda_ot,
)
from .classic import ClassicState, apply_normalization_trick, greenkhorn, sinkhorn
from .core import (
    ArgumentError,
    ConfigurationError,
    CostMatrix,
    DualPotentials,
    Measure,
    SolveReport,
    SolverConfig,
    Termination,
    TraceRecord,
    TransportPlan,
    dual_f,
    dual_gradient,
    dual_phi,
    dual_radius_bound,
    kl_progress,
    marginal_error,
    ot_cost,
    plan_from_potentials,
    rho,
    round_to_feasible,
)
from .data import GridImage, competitive_ratio, gen_synthetic_image, l1_ground_cost, load_mnist_idx
from .driver import ApproxRequest, GuaranteeRecord, Method, approx_ot, mix_marginals
from .oracle import LpSolution, exact_ot_lp

__version__ = "0.1.0"
