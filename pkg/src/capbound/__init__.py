"""Certified channel-capacity bounds via dual smoothing and fast gradients."""

from .blahut_arimoto import BAReport, ba_iterations, ba_solve
from .channels import (
    PerturbedSolve,
    make_awgn_quantized,
    make_bec,
    make_bsc,
    make_random,
    parse_channel_spec,
    perturb_channel,
    solve_with_perturbation,
)
from .continuous import (
    ContinuousChannel,
    ContinuousCost,
    ContinuousSchedule,
    PoissonReport,
    TailBound,
    TruncatedChannel,
    choose_truncation_level,
    continuous_schedule,
    eval_G_nu_continuous,
    lapidoth_lb,
    poisson_channel,
    poisson_sweep,
    smoothing_gap_bound,
    solve_poisson,
    tail_Rk,
    truncate,
    truncation_error_bound,
)
from .dual_solver import (
    DualPoint,
    MuPair,
    SmoothingConfig,
    SolveReport,
    apriori_error_bound,
    apriori_iterations,
    dual_radius,
    eval_F,
    eval_G_nu_constrained,
    eval_G_nu_unconstrained,
    exact_G_constrained,
    exact_G_unconstrained,
    project_Q,
    scheduled_iterations,
    smoothing_constants,
    solve_capacity,
    solve_mu,
)
from .errors import (
    AssumptionViolated,
    BudgetExceeded,
    CapacityError,
    DimensionMismatch,
    EpsilonTooLarge,
    Infeasible,
    InvalidChannel,
    InvalidOrder,
    NeedLargerM,
    NewtonStall,
    QuadratureNotConverged,
    TailNotComputable,
)
from .info_theory import (
    ChannelMatrix,
    CostConstraint,
    DiffNormResult,
    ProbVector,
    channel_diff_norm,
    continuity_capacity_bound,
    entropy,
    mutual_information,
    project_simplex,
)

__version__ = "0.1.0"
