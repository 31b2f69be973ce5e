"""Asymptotic Poisson/Gumbel statistics of gapless local alignment of
two independent finite-state Markov chains."""

from .align import (
    AlignmentResult,
    Excursion,
    Sequences,
    count_excesses,
    full_matrix,
    make_sequences,
    reflected_walk,
    scan_counts,
    score_matrix_scan,
)
from .conditions import (
    ConditionReport,
    IIDClosedForm,
    compute_J,
    condition_verdict,
    iid_check,
    sufficient_test,
)
from .errors import (
    ChainAlignError,
    ConditionNotVerified,
    ConvergenceFailure,
    DriftNotNegative,
    GcdNotOne,
    InsufficientReplicates,
    ModelError,
    ModelFileError,
    NoPositiveCycle,
    NonStochasticRow,
    NotIID,
    Periodic,
    Reducible,
    SeedRequired,
)
from .ladder import (
    GumbelParams,
    LadderStats,
    gumbel_params,
    normalize_score,
    renewal_frequencies,
    simulate_ladder,
)
from .model import (
    CycleWitness,
    PairScore,
    ScoreModel,
    ShiftReport,
    StationaryInfo,
    TransitionScore,
    check_positivity_condition,
    check_shift_condition,
    is_additive,
    stationary,
    validate_model,
)
from .montecarlo import (
    MeanReport,
    ValidationRun,
    run_grid,
    simulate_chain_pair,
    validate_mean,
    validate_poisson,
)
from .spectral import (
    PFResult,
    TiltedModel,
    log_phi,
    perron,
    phi,
    phi0,
    phi_i,
    solve_theta_star,
)

__all__ = [name for name in dir() if not name.startswith("_")]
