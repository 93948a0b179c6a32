"""Service operations: the single implementation behind both the HTTP
endpoints and the CLI.  Requests and responses are the pydantic models in
``.models``; all heavy lifting happens in the core package."""

from __future__ import annotations

import numpy as np

from ..data_io import generate_synthetic, schema_for, summarize
from ..diagnostics import diagnose
from ..model import ValidationError
from ..samplers import run
from . import models


def estimate(request: models.EstimateRequest, progress=None) -> models.EstimateResponse:
    """Run one or more engines on an inline survey and summarize each.

    ``progress`` is an optional in-process callback forwarded to the
    samplers (not available over HTTP).
    """
    data = request.survey.to_survey()
    prior = request.prior.to_prior(data)
    if not 0 <= request.level < 1:
        raise ValidationError("level must lie in [0, 1)")

    engines = request.engines or [request.config.engine]
    ordered = list(dict.fromkeys(engines))
    diag_config = request.diagnostics.to_config()

    results = []
    theta_means: dict[str, np.ndarray] = {}
    for engine in ordered:
        config = request.config.to_config(engine=engine)
        draws = run(data, prior, config, progress=progress)
        report = diagnose(draws, diag_config)
        document = summarize(draws, data, level=request.level, diagnostics=report)
        results.append(
            models.EngineResultPayload(
                engine=engine,
                summary=models.SummaryPayload.from_document(document),
                diagnostics=models.DiagnosticsPayload.from_report(report),
                draws=models.DrawsPayload.from_core(draws)
                if request.include_draws
                else None,
            )
        )
        pooled = draws.theta_draws().reshape(-1, draws.n_unknown)
        theta_means[engine] = pooled.mean(axis=0)

    comparison = None
    if len(ordered) > 1:
        comparison = _compare(
            theta_means, list(data.unknown_labels), request.comparison_tolerance
        )

    flagged = any(r.diagnostics.flagged for r in results)
    return models.EstimateResponse(
        results=results, comparison=comparison, flagged=flagged
    )


def _compare(theta_means, labels, tolerance) -> models.ComparisonPayload:
    engines = list(theta_means)
    entries = []
    all_within = True
    for u, label in enumerate(labels):
        means = {e: float(theta_means[e][u]) for e in engines}
        worst = 0.0
        for i in range(len(engines)):
            for j in range(i + 1, len(engines)):
                a, b = means[engines[i]], means[engines[j]]
                midpoint = 0.5 * (abs(a) + abs(b))
                if midpoint > 0:
                    worst = max(worst, abs(a - b) / midpoint)
        entries.append(
            models.ComparisonEntryPayload(
                parameter=f"theta:{label}",
                posterior_means=means,
                max_relative_difference=worst,
            )
        )
        if worst > tolerance:
            all_within = False
    return models.ComparisonPayload(
        tolerance=tolerance, entries=entries, within_tolerance=all_within
    )


def simulate(request: models.SimulateRequest) -> models.SimulateResponse:
    """Forward-simulate a survey with known ground truth."""
    data, truth = generate_synthetic(
        n=request.n,
        n_known=len(request.known_sizes),
        n_unknown=len(request.true_theta),
        true_theta=request.true_theta,
        known_sizes=request.known_sizes,
        total_population=request.total_population,
        degree_law=(request.degree_shape, request.degree_rate),
        seed=request.seed,
    )
    return models.SimulateResponse(
        survey=models.SurveyPayload.from_survey(data),
        truth=models.GroundTruthPayload.from_core(truth),
        schema_document=schema_for(data),
        seed=request.seed,
        config_hash=request.hash(),
    )


def diagnose_draws(request: models.DiagnoseRequest) -> models.DiagnoseResponse:
    """Convergence report for a previously produced draw matrix."""
    draws = request.draws.to_core()
    report = diagnose(draws, request.config.to_config())
    return models.DiagnoseResponse(report=models.DiagnosticsPayload.from_report(report))


def benchmark(request: models.BenchmarkRequest) -> models.BenchmarkResponse:
    """Time every requested engine at an equal raw draw count.

    Each engine runs ``draw_count`` iterations per chain with no burn-in or
    thinning, so raw draw counts match across engines; reporting only, no
    assertions.  ESS is the mean over frequency parameters of per-chain
    effective sample sizes summed across chains.
    """
    from ..diagnostics import effective_sample_size

    data = request.survey.to_survey()
    prior = request.prior.to_prior(data)
    rows = []
    for engine in request.engines:
        config = models.RunConfigPayload(
            engine=engine,
            chains=request.chains,
            iterations=request.draw_count,
            burn_in=0,
            thin=1,
            seed=request.seed,
            parallel=request.parallel,
        ).to_config()
        draws = run(data, prior, config)
        theta = draws.theta_draws()
        ess_by_param = [
            sum(
                effective_sample_size(theta[c, :, u])
                for c in range(draws.n_chains)
            )
            for u in range(draws.n_unknown)
        ]
        mean_ess = float(np.mean(ess_by_param))
        total_draws = draws.n_chains * draws.kept_per_chain
        rows.append(
            models.BenchmarkRow(
                engine=engine,
                seed=draws.seed,
                config_hash=draws.config_hash,
                draws=total_draws,
                wall_seconds=draws.wall_seconds,
                draws_per_second=total_draws / draws.wall_seconds,
                mean_frequency_ess=mean_ess,
                ess_per_second=mean_ess / draws.wall_seconds,
            )
        )
    return models.BenchmarkResponse(rows=rows)
