"""Certified analysis and simulation of a randomized edge-cut procedure on
cubic graphs: an error-tracked recurrence solver, an exact small-depth
oracle, and a Monte-Carlo harness on random cubic graphs."""

from .numerics import DegenerateDivisionError, PrecisionContext, TrackedScalar
from .oracle import OracleResult, compare, exact_small_k
from .recurrence import (
    AuxQuantities,
    CalibrationResult,
    DerivedBounds,
    StateVector,
    aux_quantities,
    derived_bounds,
    init_round,
    phase_calibration,
    solve,
    step,
)
from .schedule import (
    FAST_PARAMS,
    PAPER_DEFAULTS,
    Category,
    PaperParams,
    RoundRule,
    Schedule,
    build_paper_schedule,
    load_schedule,
    save_schedule,
    swap_schedule,
)
from .mc_sim import (
    CubicGraph,
    CutResult,
    SimState,
    count_short_cycles,
    estimate,
    extract_cut,
    gen_cubic,
    run_procedure,
)

__version__ = "0.1.0"
