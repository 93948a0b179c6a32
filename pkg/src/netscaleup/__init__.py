"""Bayesian size estimation for hard-to-reach populations from
network scale-up surveys, with three interchangeable posterior engines."""

__version__ = "0.1.0"

from .data_io import (
    GroundTruth,
    SummaryDocument,
    export_draws,
    export_plotdata,
    generate_synthetic,
    import_draws,
    load_survey_csv,
    summarize,
)
from .diagnostics import (
    DiagnosticsConfig,
    DiagnosticsReport,
    diagnose,
    effective_sample_size,
    gelman_rubin,
    geweke,
    raftery_lewis,
)
from .model import (
    BetaParams,
    DrawMatrix,
    LatentState,
    PriorSpec,
    SurveyData,
    TruncGammaParams,
    ValidationError,
    delta_full_conditional,
    log_likelihood,
    pi_frequencies,
    theta_full_conditional,
)
from .samplers import (
    RunConfig,
    initialize_state,
    run,
    run_gibbs,
    run_mc,
    run_mh,
    sample_trunc_gamma,
)

__all__ = [
    "BetaParams",
    "DiagnosticsConfig",
    "DiagnosticsReport",
    "DrawMatrix",
    "GroundTruth",
    "LatentState",
    "PriorSpec",
    "RunConfig",
    "SummaryDocument",
    "SurveyData",
    "TruncGammaParams",
    "ValidationError",
    "delta_full_conditional",
    "diagnose",
    "effective_sample_size",
    "export_draws",
    "export_plotdata",
    "gelman_rubin",
    "generate_synthetic",
    "geweke",
    "import_draws",
    "initialize_state",
    "load_survey_csv",
    "log_likelihood",
    "pi_frequencies",
    "raftery_lewis",
    "run",
    "run_gibbs",
    "run_mc",
    "run_mh",
    "sample_trunc_gamma",
    "summarize",
    "theta_full_conditional",
]
