"""Stability and performance analysis of incremental (INDI) control loops."""

__version__ = "0.1.0"

from .tf_core import (
    Atom,
    Delay,
    DomainError,
    Feedback,
    FrequencyResponse,
    NumericalFailure,
    Polynomial,
    Product,
    Rational,
    Scale,
    SingularEvaluationError,
    Sum,
    TFExpr,
    eval_exact,
    freq_response,
    pade2,
    poly_roots,
    rationalize,
    routh_stable,
)
from .blocks import (
    GustSpec,
    LoopConfig,
    NoiseSpec,
    PlantModel,
    block_tfs,
    command_square,
    desk_plant,
    gust_profile,
    make_roll,
    make_short_period,
    plant_tf,
)
from .loop_synthesis import (
    LoopSet,
    closed_loop,
    equivalent_controller,
    gamma1,
    gamma2,
    open_loop,
    pch_ratio,
    pid_reduction,
)
from .stability_analysis import (
    MarginReport,
    StabilityGrid,
    compensation_compare,
    delay_stability_grid,
    margins,
    roll_margins_closed_form,
    sync_delay_bound,
    sync_delay_char_poly,
    sync_delay_limit,
)
from .performance_analysis import PerformanceSet, pch_performance_delta, performance_set
from .time_sim import MetricsReport, SimScenario, SimTrace, robustness_mc, run_metrics, simulate
