"""Survey ingestion, synthetic data generation and persistence of results.

File formats
------------
Survey CSV: one row per respondent, integer count columns, optional weight
column; lines starting with ``#`` are metadata comments and are skipped.
A sidecar schema (JSON) maps columns to roles so the data file itself stays
untouched::

    {"known": [{"column": "teachers", "size": 120300}, ...],
     "unknown": ["drug_users", ...],
     "weight": "w",                # optional
     "total_population": 1800000}

Draw exports carry full metadata in ``#``-prefixed header lines (CSV) or a
first-line meta object (JSONL), then one record per (chain, iteration,
parameter, value).  Floats are serialized with ``repr`` so a re-import
reproduces the draws bit-for-bit.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import DrawMatrix, SurveyData, ValidationError

_QUANTILE_GRID = tuple(range(1, 100))  # plotdata percent grid


class SchemaError(ValidationError):
    """The schema document is malformed or inconsistent with the CSV."""


class CsvFormatError(ValidationError):
    """A survey CSV cell violates the format; carries row/column coordinates."""


# ---------------------------------------------------------------------------
# Schema


def load_schema(source) -> dict:
    """Read and validate a schema mapping from a path, JSON string or dict."""
    if isinstance(source, dict):
        raw = source
    else:
        text = Path(source).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError("schema must be a JSON object")

    known = raw.get("known")
    if not isinstance(known, list) or not known:
        raise SchemaError("schema.known must be a non-empty list")
    for j, entry in enumerate(known):
        if not isinstance(entry, dict) or "column" not in entry or "size" not in entry:
            raise SchemaError(f"schema.known[{j}] must have 'column' and 'size'")
        if not isinstance(entry["size"], (int, float)) or entry["size"] <= 0:
            raise SchemaError(f"schema.known[{j}].size must be a positive number")

    unknown = raw.get("unknown")
    if not isinstance(unknown, list) or not unknown or not all(
        isinstance(c, str) for c in unknown
    ):
        raise SchemaError("schema.unknown must be a non-empty list of column names")

    total = raw.get("total_population")
    if not isinstance(total, (int, float)) or total <= 0:
        raise SchemaError("schema.total_population must be a positive number")

    weight = raw.get("weight")
    if weight is not None and not isinstance(weight, str):
        raise SchemaError("schema.weight must be a column name when present")

    columns = [e["column"] for e in known] + list(unknown)
    if weight:
        columns.append(weight)
    dupes = {c for c in columns if columns.count(c) > 1}
    if dupes:
        raise SchemaError(f"schema references columns more than once: {sorted(dupes)}")
    return raw


def _parse_count(cell: str, row: int, column: str) -> int:
    text = cell.strip()
    if not text:
        raise CsvFormatError(f"missing count at row {row}, column {column!r}")
    try:
        value = int(text)
    except ValueError:
        raise CsvFormatError(
            f"non-integer count {text!r} at row {row}, column {column!r}"
        ) from None
    if value < 0:
        raise CsvFormatError(f"negative count {value} at row {row}, column {column!r}")
    return value


def load_survey_csv(path, schema) -> SurveyData:
    """Load and validate a survey CSV against a schema mapping.

    Columns not referenced by the schema (demographics etc.) are ignored.
    Missing cells are rejected; there is no imputation.  Error messages name
    the offending 1-based data row and column.
    """
    schema = load_schema(schema)
    known_cols = [e["column"] for e in schema["known"]]
    unknown_cols = list(schema["unknown"])
    weight_col = schema.get("weight")

    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    if reader.fieldnames is None:
        raise CsvFormatError("survey CSV has no header row")
    header = set(reader.fieldnames)
    wanted = known_cols + unknown_cols + ([weight_col] if weight_col else [])
    missing = [c for c in wanted if c not in header]
    if missing:
        raise SchemaError(f"schema references columns absent from the CSV: {missing}")

    x_rows, y_rows, weights = [], [], []
    for r, record in enumerate(reader, start=1):
        if None in record and record[None]:
            raise CsvFormatError(f"row {r} has more cells than the header")
        x_rows.append([_parse_count(record[c] or "", r, c) for c in known_cols])
        y_rows.append([_parse_count(record[c] or "", r, c) for c in unknown_cols])
        if weight_col:
            cell = (record[weight_col] or "").strip()
            try:
                w = float(cell)
            except ValueError:
                raise CsvFormatError(
                    f"non-numeric weight {cell!r} at row {r}, column {weight_col!r}"
                ) from None
            weights.append(w)
    if not x_rows:
        raise CsvFormatError("survey CSV contains no data rows")

    return SurveyData(
        x=np.array(x_rows, dtype=np.int64),
        y=np.array(y_rows, dtype=np.int64),
        known_sizes=np.array([e["size"] for e in schema["known"]], dtype=np.float64),
        total_population=float(schema["total_population"]),
        weights=np.array(weights) if weight_col else None,
        known_labels=tuple(known_cols),
        unknown_labels=tuple(unknown_cols),
    )


def write_survey_csv(data: SurveyData, path, meta: dict | None = None) -> None:
    """Write a survey back to CSV (metadata as ``#`` comment lines)."""
    with open(path, "w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh)
        writer.writerow(list(data.known_labels) + list(data.unknown_labels) + ["weight"])
        for i in range(data.n_respondents):
            row = [int(v) for v in data.x[i]] + [int(v) for v in data.y[i]]
            row.append(repr(float(data.weights[i])))
            writer.writerow(row)


def schema_for(data: SurveyData) -> dict:
    """Schema document describing a SurveyData instance."""
    return {
        "known": [
            {"column": lbl, "size": float(sz)}
            for lbl, sz in zip(data.known_labels, data.known_sizes)
        ],
        "unknown": list(data.unknown_labels),
        "weight": "weight",
        "total_population": float(data.total_population),
    }


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass(frozen=True)
class GroundTruth:
    """The latent values a synthetic survey was generated from."""

    theta: np.ndarray
    delta: np.ndarray
    rounded_degrees: np.ndarray

    def to_dict(self) -> dict:
        return {
            "theta": [float(v) for v in self.theta],
            "delta": [float(v) for v in self.delta],
            "rounded_degrees": [int(v) for v in self.rounded_degrees],
        }


def generate_synthetic(
    n: int,
    n_known: int,
    n_unknown: int,
    true_theta,
    known_sizes,
    total_population: float,
    degree_law: tuple[float, float] = (2.0, 0.01),
    seed: int = 0,
) -> tuple[SurveyData, GroundTruth]:
    """Forward-simulate a survey from the random-degree model.

    Degrees are drawn from Gamma(shape, rate) = ``degree_law`` and rounded
    to integers for the binomial count draws (inference keeps degrees
    continuous; at typical degree scales the rounding is negligible).
    """
    theta = np.asarray(true_theta, dtype=np.float64)
    sizes = np.asarray(known_sizes, dtype=np.float64)
    if theta.shape != (n_unknown,):
        raise ValidationError(f"true_theta must have length {n_unknown}")
    if sizes.shape != (n_known,):
        raise ValidationError(f"known_sizes must have length {n_known}")
    # theta = 0 is a legal generator edge (a population nobody knows);
    # inference keeps frequencies strictly inside (0, 1).
    if np.any(theta < 0) or np.any(theta >= 1):
        raise ValidationError("true_theta entries must lie in [0, 1)")
    shape, rate = float(degree_law[0]), float(degree_law[1])
    if shape <= 0 or rate <= 0:
        raise ValidationError("degree_law entries must be positive")

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    delta = rng.gamma(shape, 1.0 / rate, int(n))
    trials = np.rint(delta).astype(np.int64)
    pi = sizes / float(total_population)
    x = rng.binomial(trials[:, None], pi[None, :])
    y = rng.binomial(trials[:, None], theta[None, :])
    data = SurveyData(
        x=x,
        y=y,
        known_sizes=sizes,
        total_population=float(total_population),
    )
    return data, GroundTruth(theta=theta, delta=delta, rounded_degrees=trials)


# ---------------------------------------------------------------------------
# Summaries


@dataclass(frozen=True)
class PopulationSummary:
    label: str
    mean: float
    median: float
    ci_low: float
    ci_high: float
    size_mean: float
    size_median: float
    size_ci_low: float
    size_ci_high: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "frequency": {
                "mean": self.mean,
                "median": self.median,
                "ci_low": self.ci_low,
                "ci_high": self.ci_high,
            },
            "size": {
                "mean": self.size_mean,
                "median": self.size_median,
                "ci_low": self.size_ci_low,
                "ci_high": self.size_ci_high,
            },
        }


@dataclass(frozen=True)
class SummaryDocument:
    """Posterior summary of one engine run, ready for serialization.

    Implied population sizes are defined as ``N`` times the corresponding
    frequency statistics, exactly; intervals are central, quantile-based
    (type-7 linear interpolation), chains pooled.
    """

    populations: tuple[PopulationSummary, ...]
    degree_means: tuple[float, ...]
    respondent_labels: tuple[str, ...]
    level: float
    metadata: dict

    @property
    def mean_degree(self) -> float:
        return float(np.mean(self.degree_means))

    def to_dict(self) -> dict:
        return {
            "populations": [p.to_dict() for p in self.populations],
            "degrees": {
                "posterior_means": {
                    lbl: dm
                    for lbl, dm in zip(self.respondent_labels, self.degree_means)
                },
                "mean": self.mean_degree,
                "min": float(np.min(self.degree_means)),
                "max": float(np.max(self.degree_means)),
            },
            "interval_level": self.level,
            "metadata": self.metadata,
        }


def summarize(
    draws: DrawMatrix,
    data: SurveyData,
    level: float = 0.95,
    diagnostics=None,
) -> SummaryDocument:
    """Posterior means, medians and central credible intervals.

    ``level=0`` degenerates to a zero-width interval at the median.
    """
    if draws.draws.size == 0:
        raise ValidationError("cannot summarize an empty DrawMatrix")
    if not 0 <= level < 1:
        raise ValidationError("interval level must lie in [0, 1)")
    if draws.n_unknown != data.n_unknown:
        raise ValidationError("draws and survey disagree on unknown populations")

    pooled_theta = draws.theta_draws().reshape(-1, draws.n_unknown)
    q_low, q_high = 0.5 - level / 2.0, 0.5 + level / 2.0
    total = data.total_population

    populations = []
    for u, label in enumerate(data.unknown_labels):
        col = pooled_theta[:, u]
        mean = float(col.mean())
        median = float(np.quantile(col, 0.5))
        lo = float(np.quantile(col, q_low))
        hi = float(np.quantile(col, q_high))
        populations.append(
            PopulationSummary(
                label=label,
                mean=mean,
                median=median,
                ci_low=lo,
                ci_high=hi,
                size_mean=total * mean,
                size_median=total * median,
                size_ci_low=total * lo,
                size_ci_high=total * hi,
            )
        )

    degree_means = draws.degree_draws().reshape(-1, data.n_respondents).mean(axis=0)

    metadata = {
        "engine": draws.engine,
        "seed": draws.seed,
        "config_hash": draws.config_hash,
        "chains": draws.n_chains,
        "iterations": draws.iterations,
        "burn_in": draws.burn_in,
        "thin": draws.thin,
        "kept_per_chain": draws.kept_per_chain,
        "wall_seconds": draws.wall_seconds,
        "clamped_beta_contributions": draws.clamped_contributions,
        "weights_used_in_estimation": False,
    }
    if draws.acceptance_rates is not None:
        rates = draws.acceptance_rates
        metadata["acceptance"] = {
            "mean": float(np.mean(rates)),
            "min": float(np.min(rates)),
            "max": float(np.max(rates)),
        }
    if diagnostics is not None:
        metadata["diagnostics_flagged"] = diagnostics.flagged
        metadata["diagnostic_flags"] = [f.to_dict() for f in diagnostics.flags]

    return SummaryDocument(
        populations=tuple(populations),
        degree_means=tuple(float(v) for v in degree_means),
        respondent_labels=data.respondent_labels,
        level=level,
        metadata=metadata,
    )


# ---------------------------------------------------------------------------
# Draw persistence


def _draws_meta(draws: DrawMatrix) -> dict:
    meta = {
        "format": "netscaleup-draws-v1",
        "engine": draws.engine,
        "seed": draws.seed,
        "config_hash": draws.config_hash,
        "iterations": draws.iterations,
        "burn_in": draws.burn_in,
        "thin": draws.thin,
        "n_unknown": draws.n_unknown,
        "wall_seconds": repr(float(draws.wall_seconds)),
        "clamped_contributions": draws.clamped_contributions,
    }
    if draws.acceptance_rates is not None:
        meta["acceptance_rates"] = ",".join(
            repr(float(v)) for v in draws.acceptance_rates
        )
    return meta


def _meta_to_drawmatrix(meta: dict, draws_arr, parameters) -> DrawMatrix:
    acc = meta.get("acceptance_rates")
    if isinstance(acc, str):
        acc = np.array([float(v) for v in acc.split(",")])
    elif acc is not None:
        acc = np.asarray(acc, dtype=np.float64)
    return DrawMatrix(
        draws=draws_arr,
        parameters=tuple(parameters),
        n_unknown=int(meta["n_unknown"]),
        engine=str(meta["engine"]),
        seed=int(meta["seed"]),
        iterations=int(meta["iterations"]),
        burn_in=int(meta["burn_in"]),
        thin=int(meta["thin"]),
        wall_seconds=float(meta["wall_seconds"]),
        config_hash=str(meta.get("config_hash", "")),
        acceptance_rates=acc,
        clamped_contributions=int(meta.get("clamped_contributions", 0)),
    )


def export_draws(draws: DrawMatrix, path, format: str = "csv") -> None:
    """Serialize a DrawMatrix with (chain, iteration, parameter) coordinates.

    ``iteration`` indexes stored draws (0-based, post burn-in/thinning).
    """
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="") as fh:
            for key, value in _draws_meta(draws).items():
                fh.write(f"# {key}: {value}\n")
            writer = csv.writer(fh)
            writer.writerow(["chain", "iteration", "parameter", "value"])
            for c in range(draws.n_chains):
                for t in range(draws.kept_per_chain):
                    row_vals = draws.draws[c, t]
                    for p, name in enumerate(draws.parameters):
                        writer.writerow([c, t, name, repr(float(row_vals[p]))])
    elif format == "jsonl":
        with open(path, "w") as fh:
            fh.write(json.dumps({"meta": _draws_meta(draws)}) + "\n")
            for c in range(draws.n_chains):
                for t in range(draws.kept_per_chain):
                    row_vals = draws.draws[c, t]
                    for p, name in enumerate(draws.parameters):
                        fh.write(
                            json.dumps(
                                {
                                    "chain": c,
                                    "iteration": t,
                                    "parameter": name,
                                    "value": float(row_vals[p]),
                                }
                            )
                            + "\n"
                        )
    else:
        raise ValidationError(f"unknown draw export format {format!r}")


def _parse_meta_lines(lines: list[str]) -> dict:
    meta = {}
    for line in lines:
        body = line.lstrip("#").strip()
        if ": " in body:
            key, value = body.split(": ", 1)
            meta[key] = value
    return meta


def import_draws(path) -> DrawMatrix:
    """Re-load an exported draws file (CSV or JSONL) into a DrawMatrix."""
    path = Path(path)
    text = path.read_text()
    first = text.lstrip()[:1]
    records: list[tuple[int, int, str, float]] = []
    if first == "{":
        meta = None
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if "meta" in obj:
                meta = obj["meta"]
                continue
            records.append(
                (int(obj["chain"]), int(obj["iteration"]), obj["parameter"],
                 float(obj["value"]))
            )
        if meta is None:
            raise ValidationError(f"{path} has no meta line")
    else:
        lines = text.splitlines()
        meta_lines = [ln for ln in lines if ln.startswith("#")]
        meta = _parse_meta_lines(meta_lines)
        if meta.get("format") != "netscaleup-draws-v1":
            raise ValidationError(f"{path} is not a netscaleup draws export")
        body = [ln for ln in lines if ln and not ln.startswith("#")]
        reader = csv.reader(io.StringIO("\n".join(body)))
        header = next(reader, None)
        if header != ["chain", "iteration", "parameter", "value"]:
            raise ValidationError(f"{path} has an unexpected draws header")
        for row in reader:
            records.append((int(row[0]), int(row[1]), row[2], float(row[3])))

    if not records:
        raise ValidationError(f"{path} contains no draws")
    parameters: list[str] = []
    seen = set()
    for _, _, name, _ in records:
        if name not in seen:
            seen.add(name)
            parameters.append(name)
    n_chains = max(r[0] for r in records) + 1
    kept = max(r[1] for r in records) + 1
    index = {name: p for p, name in enumerate(parameters)}
    arr = np.full((n_chains, kept, len(parameters)), np.nan)
    for c, t, name, value in records:
        arr[c, t, index[name]] = value
    if np.any(np.isnan(arr)):
        raise ValidationError(f"{path} is missing draws for some coordinates")
    return _meta_to_drawmatrix(meta, arr, parameters)


def export_plotdata(draws: DrawMatrix, data: SurveyData, path) -> None:
    """Emit plot-ready size draws plus a 1..99% quantile grid per population.

    Columns: population, kind, value.  ``kind`` is ``draw`` for the thinned
    population-size draws (frequency times total population, pooled over
    chains in chain order) and ``quantile_XX`` for the grid; quantiles of
    the sizes are total-population multiples of the frequency quantiles,
    exactly.
    """
    if draws.n_unknown != data.n_unknown:
        raise ValidationError("draws and survey disagree on unknown populations")
    total = data.total_population
    pooled = draws.theta_draws().reshape(-1, draws.n_unknown)
    with open(path, "w", newline="") as fh:
        fh.write("# format: netscaleup-plotdata-v1\n")
        fh.write(f"# engine: {draws.engine}\n")
        fh.write(f"# seed: {draws.seed}\n")
        fh.write(f"# config_hash: {draws.config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["population", "kind", "value"])
        for u, label in enumerate(data.unknown_labels):
            col = pooled[:, u]
            for v in col:
                writer.writerow([label, "draw", repr(total * float(v))])
            grid = np.quantile(col, np.array(_QUANTILE_GRID) / 100.0)
            for pct, qv in zip(_QUANTILE_GRID, grid):
                writer.writerow([label, f"quantile_{pct:02d}", repr(total * float(qv))])
