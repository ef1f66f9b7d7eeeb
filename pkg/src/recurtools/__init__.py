"""Simulation and analysis of recurrent disability progression in trials.

The package covers the full loop: simulate score trajectories or event
histories under configurable scenarios, derive confirmed-progression events
from visit-wise scores, estimate and compare mean cumulative functions, fit
time-to-first-event and recurrent-event regression models, aggregate
replicated studies, and size future trials.
"""
from .data_model import (
    EDSS_CSV_COLUMNS,
    EDSS_GRID,
    RECURRENT_CSV_COLUMNS,
    WLW_CSV_COLUMNS,
    EDSSPanel,
    FitResult,
    RecurrentEventTable,
    ScenarioConfig,
    ValidationReport,
    WLWTable,
    read_edss_csv,
    read_recurrent_csv,
    read_wlw_csv,
    score_to_state,
    state_to_score,
    to_wlw,
    validate_table,
    validate_wlw,
    write_edss_csv,
    write_recurrent_csv,
    write_wlw_csv,
)
from .design import (
    CensoringModel,
    DesignInputs,
    RateModel,
    SampleSizeResult,
    lwyy_sample_size,
    nb_sample_size,
    schoenfeld_events,
)
from .endpoint import EndpointConfig, ReferenceState, derive_cdp, panel_to_event_table, required_increase
from .errors import (
    DataError,
    DegenerateArmError,
    EmptyInputError,
    HROneError,
    InsufficientEventsError,
    NoEventsError,
    NonConvergenceError,
    NumericError,
    PanelTooShortError,
    RecruitOverrunError,
    RecurtoolsError,
    TooFewReplicatesError,
)
from .harness import (
    EvaluationSummary,
    ReplicateResult,
    load_replicates,
    replicate_frame,
    run_scenario,
    summarize,
    summary_frame,
)
from .nonparam import StepFunction, cmf, cmf_score, cmf_test, kaplan_meier, nelson_aalen
from .regression import (
    MODEL_IDS,
    MODEL_SPECS,
    CountData,
    PartialLikelihoodSpec,
    breslow_baseline,
    fit_ag_lwyy,
    fit_model,
    model_spec,
    nb_fit,
    pl_fit,
    poisson_fit,
    score_gradient_check,
)
from .simgen import (
    DEFAULT_BASELINE_PROBS,
    IntensityMatrix,
    TransitionCache,
    TrialSummary,
    apply_trial_design,
    block_randomize,
    default_q0,
    draw_frailty,
    generate_trial,
    matrix_exp,
    s1_generate_subject,
    s2_build_q,
    s2_generate_panel,
    s2_generate_visits,
)

__version__ = "1.0.0"

__all__ = [name for name in dir() if not name.startswith("_")]
