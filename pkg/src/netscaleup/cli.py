"""Command-line interface: a thin client over the service operations.

Every subcommand marshals files into the service request models, invokes
the same operations the HTTP endpoints use, and writes the responses back
to disk.  Options can also be supplied through environment variables with
the ``NETSCALEUP_`` prefix (e.g. ``NETSCALEUP_ESTIMATE_SEED=7``).

Exit codes: 0 success; 1 validation or data error; 2 usage error;
3 convergence diagnostics flagged (suppress with --no-strict).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .data_io import (
    export_draws,
    export_plotdata,
    import_draws,
    load_survey_csv,
    write_survey_csv,
)
from .model import ValidationError
from .service import models, ops

EXIT_VALIDATION = 1
EXIT_FLAGGED = 3

_CONTEXT = {"auto_envvar_prefix": "NETSCALEUP", "help_option_names": ["-h", "--help"]}


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_VALIDATION)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _progress_printer(verbose: int):
    if verbose < 2:
        return None

    def callback(event: dict) -> None:
        click.echo(
            f"[{event['engine']}] chain {event['chain']} "
            f"iteration {event['iteration']}/{event['total']}",
            err=True,
        )

    return callback


@click.group(context_settings=_CONTEXT)
@click.version_option(__version__)
def cli():
    """Estimate hard-to-reach population sizes from scale-up surveys."""


def _run_options(fn):
    decorators = [
        click.option("--engine", type=click.Choice(["mh", "gibbs", "mc", "all"]),
                     default="gibbs", show_default=True, help="Posterior engine(s)."),
        click.option("--chains", type=int, default=4, show_default=True),
        click.option("--iters", type=int, default=80_000, show_default=True,
                     help="Raw iterations (or draws for mc) per chain."),
        click.option("--burnin", type=int, default=10_000, show_default=True),
        click.option("--thin", type=int, default=70, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--level", type=float, default=0.95, show_default=True,
                     help="Central credible interval level."),
        click.option("--parallel", type=int, default=1, show_default=True,
                     help="Worker processes for chain-level parallelism."),
        click.option("--mh-step", type=float, default=0.5, show_default=True,
                     help="Initial random-walk step on the log-degree scale."),
        click.option("--mh-target", type=float, default=0.44, show_default=True,
                     help="Target acceptance rate during burn-in adaptation."),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


@cli.command()
@click.argument("data_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("schema", type=click.Path(exists=True, dir_okay=False))
@_run_options
@click.option("--out-dir", type=click.Path(file_okay=False), default="netscaleup-out",
              show_default=True)
@click.option("--no-strict", is_flag=True,
              help="Exit 0 even when convergence diagnostics flag parameters.")
@click.option("--write-draws/--no-write-draws", default=True, show_default=True)
@click.option("--plot-data/--no-plot-data", default=True, show_default=True)
@click.option("--comparison-tolerance", type=float, default=0.05, show_default=True)
@click.option("-v", "--verbose", count=True)
def estimate(data_csv, schema, engine, chains, iters, burnin, thin, seed, level,
             parallel, mh_step, mh_target, out_dir, no_strict, write_draws,
             plot_data, comparison_tolerance, verbose):
    """Estimate population sizes from DATA_CSV described by SCHEMA.

    Writes, per engine: summary_<engine>.json, diagnostics_<engine>.json,
    draws_<engine>.csv and plotdata_<engine>.csv; plus comparison.json when
    several engines run.
    """
    try:
        data = load_survey_csv(data_csv, schema)
    except ValidationError as exc:
        _fail(str(exc))

    engines = ["mh", "gibbs", "mc"] if engine == "all" else [engine]
    request = models.EstimateRequest(
        survey=models.SurveyPayload.from_survey(data),
        config=models.RunConfigPayload(
            engine=engines[0], chains=chains, iterations=iters, burn_in=burnin,
            thin=thin, seed=seed, mh_target_acceptance=mh_target,
            mh_initial_step=mh_step, parallel=parallel,
        ),
        engines=engines,
        level=level,
        include_draws=write_draws or plot_data,
        comparison_tolerance=comparison_tolerance,
    )
    try:
        response = ops.estimate(request, progress=_progress_printer(verbose))
    except ValidationError as exc:
        _fail(str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for result in response.results:
        name = result.engine
        _write_json(out / f"summary_{name}.json", result.summary.model_dump())
        _write_json(out / f"diagnostics_{name}.json", result.diagnostics.model_dump())
        if result.draws is not None:
            draw_matrix = result.draws.to_core()
            if write_draws:
                export_draws(draw_matrix, out / f"draws_{name}.csv", format="csv")
            if plot_data:
                export_plotdata(draw_matrix, data, out / f"plotdata_{name}.csv")
        _echo_engine_summary(result, verbose)
    if response.comparison is not None:
        _write_json(out / "comparison.json", {
            "engines": [r.engine for r in response.results],
            "seed": seed,
            "config_hash": {
                r.engine: r.summary.metadata["config_hash"]
                for r in response.results
            },
            **response.comparison.model_dump(),
        })
        _echo_comparison(response.comparison)

    if response.flagged:
        flagged = [
            f"{f.parameter}:{f.diagnostic}"
            for r in response.results
            for f in r.diagnostics.flags
        ]
        click.echo(
            f"convergence flags fired on {len(flagged)} parameter(s): "
            + ", ".join(flagged[:8]) + ("..." if len(flagged) > 8 else ""),
            err=True,
        )
        if not no_strict:
            sys.exit(EXIT_FLAGGED)
    click.echo(f"outputs written to {out}")


def _echo_engine_summary(result: models.EngineResultPayload, verbose: int) -> None:
    meta = result.summary.metadata
    click.echo(
        f"[{result.engine}] seed={meta['seed']} "
        f"wall={meta['wall_seconds']:.2f}s "
        f"kept={meta['chains']}x{meta['kept_per_chain']}"
    )
    for pop in result.summary.populations:
        click.echo(
            f"  {pop.label}: size mean {pop.size.mean:,.0f} "
            f"[{pop.size.ci_low:,.0f}, {pop.size.ci_high:,.0f}] "
            f"(frequency {pop.frequency.mean:.5f})"
        )
    if verbose:
        click.echo(f"  mean degree {result.summary.degrees.mean:.1f} "
                   f"(range {result.summary.degrees.min:.1f}"
                   f"-{result.summary.degrees.max:.1f})")


def _echo_comparison(comparison: models.ComparisonPayload) -> None:
    click.echo("engine agreement (posterior means):")
    for entry in comparison.entries:
        means = "  ".join(f"{e}={m:.5f}" for e, m in entry.posterior_means.items())
        click.echo(
            f"  {entry.parameter}: {means}  "
            f"max rel diff {entry.max_relative_difference:.2%}"
        )
    verdict = "within" if comparison.within_tolerance else "OUTSIDE"
    click.echo(f"  -> {verdict} tolerance {comparison.tolerance:.2%}")


@cli.command()
@click.option("--n", type=int, required=True, help="Number of respondents.")
@click.option("--theta", required=True,
              help="Comma-separated true unknown-population frequencies.")
@click.option("--known-sizes", required=True,
              help="Comma-separated known population sizes.")
@click.option("--total-population", type=float, required=True)
@click.option("--degree-shape", type=float, default=2.0, show_default=True)
@click.option("--degree-rate", type=float, default=0.01, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default="netscaleup-sim",
              show_default=True)
def simulate(n, theta, known_sizes, total_population, degree_shape, degree_rate,
             seed, out_dir):
    """Generate a synthetic survey with known ground truth.

    Writes survey.csv, schema.json and truth.json into --out-dir; the pair
    (survey.csv, schema.json) feeds straight into `estimate`.
    """
    request = models.SimulateRequest(
        n=n,
        true_theta=_floats(theta),
        known_sizes=_floats(known_sizes),
        total_population=total_population,
        degree_shape=degree_shape,
        degree_rate=degree_rate,
        seed=seed,
    )
    try:
        response = ops.simulate(request)
    except ValidationError as exc:
        _fail(str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = response.survey.to_survey()
    identity = {"engine": "synthetic", "seed": seed,
                "config_hash": response.config_hash}
    write_survey_csv(
        data,
        out / "survey.csv",
        meta={"format": "netscaleup-survey-v1", **identity},
    )
    _write_json(out / "schema.json",
                {**response.schema_document, "_meta": identity})
    _write_json(out / "truth.json", {**identity, **response.truth.model_dump()})
    click.echo(
        f"simulated n={n} respondents, {len(request.known_sizes)} known and "
        f"{len(request.true_theta)} unknown populations -> {out}"
    )


@cli.command()
@click.argument("draws_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default="diagnostics.json",
              show_default=True)
@click.option("--rhat-threshold", type=float, default=1.1, show_default=True)
@click.option("--geweke-threshold", type=float, default=6.0, show_default=True)
@click.option("--dependence-threshold", type=float, default=5.0, show_default=True)
@click.option("--no-strict", is_flag=True,
              help="Exit 0 even when diagnostics flag parameters.")
def diagnose(draws_file, out, rhat_threshold, geweke_threshold,
             dependence_threshold, no_strict):
    """Convergence diagnostics for an exported draws file."""
    try:
        draw_matrix = import_draws(draws_file)
    except ValidationError as exc:
        _fail(str(exc))
    request = models.DiagnoseRequest(
        draws=models.DrawsPayload.from_core(draw_matrix),
        config=models.DiagnosticsConfigPayload(
            rhat_threshold=rhat_threshold,
            geweke_threshold=geweke_threshold,
            dependence_threshold=dependence_threshold,
        ),
    )
    response = ops.diagnose_draws(request)
    report = response.report
    _write_json(Path(out), report.model_dump())

    if report.n_chains < 2:
        click.echo("R-hat unavailable: needs at least two chains")
    insufficient = {
        entry
        for p in report.parameters
        for entry in p.raftery_lewis
        if isinstance(entry, str) and entry.startswith("insufficient")
    }
    for message in sorted(insufficient):
        click.echo(f"Raftery-Lewis: {message}")
    click.echo(
        f"diagnosed {len(report.parameters)} parameters over "
        f"{report.n_chains} chain(s); {len(report.flags)} flag(s) -> {out}"
    )
    if report.flagged and not no_strict:
        sys.exit(EXIT_FLAGGED)


@cli.command()
@click.argument("data_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("schema", type=click.Path(exists=True, dir_okay=False))
@click.option("--draws", "draw_count", type=int, default=80_000, show_default=True,
              help="Raw draw count per engine per chain.")
@click.option("--engines", default="mh,gibbs,mc", show_default=True,
              help="Comma-separated engines to time.")
@click.option("--chains", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--parallel", type=int, default=1, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Also write benchmark.json here.")
def benchmark(data_csv, schema, draw_count, engines, chains, seed, parallel, out_dir):
    """Time every engine at an equal raw draw count (reporting only)."""
    try:
        data = load_survey_csv(data_csv, schema)
    except ValidationError as exc:
        _fail(str(exc))
    engine_list = [e.strip() for e in engines.split(",") if e.strip()]
    try:
        request = models.BenchmarkRequest(
            survey=models.SurveyPayload.from_survey(data),
            draw_count=draw_count,
            engines=engine_list,
            chains=chains,
            seed=seed,
            parallel=parallel,
        )
        response = ops.benchmark(request)
    except (ValidationError, ValueError) as exc:
        _fail(str(exc))

    header = f"{'engine':<8}{'draws':>10}{'seconds':>12}{'draws/s':>12}{'ESS':>10}{'ESS/s':>12}"
    click.echo(header)
    click.echo("-" * len(header))
    for row in response.rows:
        click.echo(
            f"{row.engine:<8}{row.draws:>10}{row.wall_seconds:>12.2f}"
            f"{row.draws_per_second:>12.0f}{row.mean_frequency_ess:>10.0f}"
            f"{row.ess_per_second:>12.1f}"
        )
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(
            out / "benchmark.json",
            {"seed": seed, "draw_count": draw_count, "chains": chains,
             "rows": [r.model_dump() for r in response.rows]},
        )
        click.echo(f"benchmark table written to {out / 'benchmark.json'}")


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service (FastAPI via uvicorn)."""
    import uvicorn

    uvicorn.run("netscaleup.service.app:app", host=host, port=port)


def main():
    cli()


if __name__ == "__main__":
    main()
