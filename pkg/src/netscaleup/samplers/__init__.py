"""Posterior engines and the truncated-Gamma generator they share."""

from .engines import (
    ENGINES,
    RunConfig,
    chain_streams,
    initialize_state,
    run,
    run_gibbs,
    run_mc,
    run_mh,
)
from .truncgamma import sample_trunc_gamma, trunc_gamma_draws

__all__ = [
    "ENGINES",
    "RunConfig",
    "chain_streams",
    "initialize_state",
    "run",
    "run_gibbs",
    "run_mc",
    "run_mh",
    "sample_trunc_gamma",
    "trunc_gamma_draws",
]
