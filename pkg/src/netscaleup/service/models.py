"""Request/response models for the estimation service.

These are the wire contract: surveys travel inline as JSON count matrices,
results come back as typed summaries, diagnostics and (optionally) full
draw matrices.  Conversion helpers bridge to the core dataclasses.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..data_io import GroundTruth, SummaryDocument
from ..diagnostics import DiagnosticsConfig, DiagnosticsReport
from ..model import DrawMatrix, PriorSpec, SurveyData

EngineName = Literal["mh", "gibbs", "mc"]


class SurveyPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    known_counts: list[list[int]] = Field(description="n x K contact counts")
    unknown_counts: list[list[int]] = Field(description="n x U contact counts")
    known_sizes: list[float]
    total_population: float
    weights: list[float] | None = None
    known_labels: list[str] | None = None
    unknown_labels: list[str] | None = None
    respondent_labels: list[str] | None = None

    def to_survey(self) -> SurveyData:
        return SurveyData(
            x=np.asarray(self.known_counts, dtype=np.int64),
            y=np.asarray(self.unknown_counts, dtype=np.int64),
            known_sizes=np.asarray(self.known_sizes, dtype=np.float64),
            total_population=self.total_population,
            weights=np.asarray(self.weights, dtype=np.float64)
            if self.weights is not None
            else None,
            known_labels=tuple(self.known_labels) if self.known_labels else None,
            unknown_labels=tuple(self.unknown_labels) if self.unknown_labels else None,
            respondent_labels=tuple(self.respondent_labels)
            if self.respondent_labels
            else None,
        )

    @classmethod
    def from_survey(cls, data: SurveyData) -> "SurveyPayload":
        return cls(
            known_counts=data.x.tolist(),
            unknown_counts=data.y.tolist(),
            known_sizes=data.known_sizes.tolist(),
            total_population=data.total_population,
            weights=data.weights.tolist(),
            known_labels=list(data.known_labels),
            unknown_labels=list(data.unknown_labels),
            respondent_labels=list(data.respondent_labels),
        )


class PriorPayload(BaseModel):
    """Scalars broadcast; lists must match the survey dimensions."""

    model_config = ConfigDict(extra="forbid")

    a: float | list[float] = 1.0
    b: float | list[float] = 1.0
    c: float | list[float] = 2.0
    d: float | list[float] = 0.01

    def to_prior(self, data: SurveyData) -> PriorSpec:
        return PriorSpec.default(data, a=self.a, b=self.b, c=self.c, d=self.d)


class RunConfigPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    engine: EngineName = "gibbs"
    chains: int = 4
    iterations: int = 80_000
    burn_in: int = 10_000
    thin: int = 70
    seed: int = 0
    mh_target_acceptance: float = 0.44
    mh_initial_step: float = 0.5
    parallel: int = 1

    def to_config(self, engine: str | None = None):
        from ..samplers import RunConfig

        return RunConfig(
            engine=engine or self.engine,
            chains=self.chains,
            iterations=self.iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            mh_target_acceptance=self.mh_target_acceptance,
            mh_initial_step=self.mh_initial_step,
            parallel=self.parallel,
        )


class DiagnosticsConfigPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rhat_threshold: float = 1.1
    geweke_threshold: float = 6.0
    dependence_threshold: float = 5.0
    geweke_first: float = 0.1
    geweke_last: float = 0.5
    rl_q: float = 0.025
    rl_r: float = 0.005
    rl_s: float = 0.95
    rl_converge_eps: float = 0.001
    max_lag: int = 20

    def to_config(self) -> DiagnosticsConfig:
        return DiagnosticsConfig(**self.model_dump())


class DrawsPayload(BaseModel):
    """A full DrawMatrix: values indexed [chain][stored iteration][parameter]."""

    engine: str
    seed: int
    config_hash: str = ""
    iterations: int
    burn_in: int
    thin: int
    wall_seconds: float
    n_unknown: int
    clamped_contributions: int = 0
    acceptance_rates: list[float] | None = None
    parameters: list[str]
    values: list[list[list[float]]]

    def to_core(self) -> DrawMatrix:
        return DrawMatrix(
            draws=np.asarray(self.values, dtype=np.float64),
            parameters=tuple(self.parameters),
            n_unknown=self.n_unknown,
            engine=self.engine,
            seed=self.seed,
            iterations=self.iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            wall_seconds=self.wall_seconds,
            config_hash=self.config_hash,
            acceptance_rates=np.asarray(self.acceptance_rates, dtype=np.float64)
            if self.acceptance_rates is not None
            else None,
            clamped_contributions=self.clamped_contributions,
        )

    @classmethod
    def from_core(cls, draws: DrawMatrix) -> "DrawsPayload":
        return cls(
            engine=draws.engine,
            seed=draws.seed,
            config_hash=draws.config_hash,
            iterations=draws.iterations,
            burn_in=draws.burn_in,
            thin=draws.thin,
            wall_seconds=draws.wall_seconds,
            n_unknown=draws.n_unknown,
            clamped_contributions=draws.clamped_contributions,
            acceptance_rates=draws.acceptance_rates.tolist()
            if draws.acceptance_rates is not None
            else None,
            parameters=list(draws.parameters),
            values=draws.draws.tolist(),
        )


class IntervalSummary(BaseModel):
    mean: float
    median: float
    ci_low: float
    ci_high: float


class PopulationSummaryPayload(BaseModel):
    label: str
    frequency: IntervalSummary
    size: IntervalSummary


class DegreeSummaryPayload(BaseModel):
    posterior_means: dict[str, float]
    mean: float
    min: float
    max: float


class SummaryPayload(BaseModel):
    populations: list[PopulationSummaryPayload]
    degrees: DegreeSummaryPayload
    interval_level: float
    metadata: dict

    @classmethod
    def from_document(cls, doc: SummaryDocument) -> "SummaryPayload":
        return cls.model_validate(doc.to_dict())


class RafteryLewisPayload(BaseModel):
    n_min: int
    burn_in: int
    n_required: int
    thin: int
    dependence_factor: float


class ParameterDiagnosticsPayload(BaseModel):
    name: str
    status: str
    rhat: float | None
    geweke_z: float | None
    ess: float | None
    autocorrelations: list[float | None]
    raftery_lewis: list[RafteryLewisPayload | str]


class FlagPayload(BaseModel):
    parameter: str
    diagnostic: str
    value: float
    threshold: float


class DiagnosticsPayload(BaseModel):
    engine: str = ""
    seed: int = 0
    config_hash: str = ""
    n_chains: int
    kept_per_chain: int
    raftery_max_required: int | None = None
    thresholds: dict[str, float]
    parameters: list[ParameterDiagnosticsPayload]
    flags: list[FlagPayload]
    flagged: bool

    @classmethod
    def from_report(cls, report: DiagnosticsReport) -> "DiagnosticsPayload":
        return cls.model_validate(report.to_dict())


class EngineResultPayload(BaseModel):
    engine: str
    summary: SummaryPayload
    diagnostics: DiagnosticsPayload
    draws: DrawsPayload | None = None


class ComparisonEntryPayload(BaseModel):
    parameter: str
    posterior_means: dict[str, float]
    max_relative_difference: float


class ComparisonPayload(BaseModel):
    """Pairwise agreement of frequency posterior means across engines."""

    tolerance: float
    entries: list[ComparisonEntryPayload]
    within_tolerance: bool


class EstimateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    survey: SurveyPayload
    prior: PriorPayload = PriorPayload()
    config: RunConfigPayload = RunConfigPayload()
    engines: list[EngineName] | None = Field(
        default=None,
        description="Engines to run; defaults to [config.engine]",
    )
    level: float = 0.95
    include_draws: bool = False
    comparison_tolerance: float = 0.05
    diagnostics: DiagnosticsConfigPayload = DiagnosticsConfigPayload()


class EstimateResponse(BaseModel):
    results: list[EngineResultPayload]
    comparison: ComparisonPayload | None = None
    flagged: bool


class SimulateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(gt=0)
    true_theta: list[float]
    known_sizes: list[float]
    total_population: float
    degree_shape: float = 2.0
    degree_rate: float = 0.01
    seed: int = 0

    def hash(self) -> str:
        import hashlib

        blob = self.model_dump_json().encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class GroundTruthPayload(BaseModel):
    theta: list[float]
    delta: list[float]
    rounded_degrees: list[int]

    @classmethod
    def from_core(cls, truth: GroundTruth) -> "GroundTruthPayload":
        return cls.model_validate(truth.to_dict())


class SimulateResponse(BaseModel):
    survey: SurveyPayload
    truth: GroundTruthPayload
    schema_document: dict
    seed: int
    config_hash: str


class DiagnoseRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    draws: DrawsPayload
    config: DiagnosticsConfigPayload = DiagnosticsConfigPayload()


class DiagnoseResponse(BaseModel):
    report: DiagnosticsPayload


class BenchmarkRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    survey: SurveyPayload
    prior: PriorPayload = PriorPayload()
    draw_count: int = Field(default=80_000, gt=0)
    engines: list[EngineName] = ["mh", "gibbs", "mc"]
    chains: int = 1
    seed: int = 0
    parallel: int = 1


class BenchmarkRow(BaseModel):
    engine: str
    seed: int
    config_hash: str
    draws: int
    wall_seconds: float
    draws_per_second: float
    mean_frequency_ess: float
    ess_per_second: float


class BenchmarkResponse(BaseModel):
    rows: list[BenchmarkRow]


class HealthResponse(BaseModel):
    status: str
    version: str
