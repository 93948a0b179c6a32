"""Random-degree model for network scale-up surveys.

Data containers, full-conditional parameter computations and the joint
log-likelihood shared by every posterior engine.  Respondent ``i`` reports
``x[i, k]`` contacts in known population ``k`` (size ``known_sizes[k]``)
and ``y[i, u]`` contacts in unknown population ``u``.  The model is

    y[i, u] ~ Binomial(delta[i], theta[u])
    x[i, k] ~ Binomial(delta[i], pi[k]),   pi[k] = known_sizes[k] / N

with a Beta(a, b) prior on each unknown frequency ``theta[u]`` and a
Gamma(c, d) prior (shape/rate) on each latent degree ``delta[i]``.

All functions here are pure; they are safe to call concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln


class ValidationError(ValueError):
    """Raised when survey data, priors or latent states violate model invariants."""


def _as_count_matrix(values, name: str) -> NDArray[np.int64]:
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.all(np.isfinite(arr)) or np.any(rounded != arr):
            bad = np.argwhere(~np.isfinite(arr) | (np.rint(arr) != arr))[0]
            raise ValidationError(
                f"{name}[{bad[0]}, {bad[1]}] is not an integer count"
            )
        arr = rounded
    if np.any(arr < 0):
        bad = np.argwhere(arr < 0)[0]
        raise ValidationError(f"{name}[{bad[0]}, {bad[1]}] is negative")
    return arr.astype(np.int64)


def _default_labels(prefix: str, count: int) -> tuple[str, ...]:
    width = max(2, len(str(count)))
    return tuple(f"{prefix}_{j + 1:0{width}d}" for j in range(count))


@dataclass(frozen=True)
class SurveyData:
    """Validated scale-up survey: count matrices plus population bookkeeping.

    ``weights`` are carried through to outputs untouched; no estimator in
    this package consumes them.
    """

    x: NDArray[np.int64]
    y: NDArray[np.int64]
    known_sizes: NDArray[np.float64]
    total_population: float
    weights: NDArray[np.float64] | None = None
    known_labels: tuple[str, ...] | None = None
    unknown_labels: tuple[str, ...] | None = None
    respondent_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        x = _as_count_matrix(self.x, "x")
        y = _as_count_matrix(self.y, "y")
        if x.shape[0] != y.shape[0]:
            raise ValidationError(
                f"x has {x.shape[0]} respondents but y has {y.shape[0]}"
            )
        n, k = x.shape
        u = y.shape[1]
        if n < 1:
            raise ValidationError("need at least one respondent")
        if k < 1 or u < 1:
            raise ValidationError("need at least one known and one unknown population")

        sizes = np.asarray(self.known_sizes, dtype=np.float64)
        if sizes.shape != (k,):
            raise ValidationError(
                f"known_sizes has shape {sizes.shape}, expected ({k},)"
            )
        total = float(self.total_population)
        if not np.isfinite(total) or total <= 0:
            raise ValidationError("total_population must be a positive real")
        if np.any(~np.isfinite(sizes)) or np.any(sizes <= 0):
            raise ValidationError("known population sizes must be positive reals")
        if np.any(sizes >= total):
            bad = int(np.argmax(sizes >= total))
            raise ValidationError(
                f"known_sizes[{bad}] = {sizes[bad]} is not below total_population"
            )

        if self.weights is None:
            w = np.ones(n)
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (n,):
                raise ValidationError(f"weights has shape {w.shape}, expected ({n},)")
            if np.any(~np.isfinite(w)) or np.any(w <= 0):
                raise ValidationError("weights must be positive reals")

        pi_sum = float(np.sum(sizes / total))
        if pi_sum >= 1.0:
            # Valid arithmetic, dubious model: the known groups cover the
            # whole population, so degrees are no longer identified cleanly.
            warnings.warn(
                f"known population frequencies sum to {pi_sum:.3f} >= 1; "
                "the scale-up model is questionable on this data",
                stacklevel=2,
            )

        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "known_sizes", sizes)
        object.__setattr__(self, "total_population", total)
        object.__setattr__(self, "weights", w)
        object.__setattr__(
            self,
            "known_labels",
            self._check_labels(self.known_labels, k, "known"),
        )
        object.__setattr__(
            self,
            "unknown_labels",
            self._check_labels(self.unknown_labels, u, "unknown"),
        )
        object.__setattr__(
            self,
            "respondent_labels",
            self._check_labels(self.respondent_labels, n, "resp"),
        )

    @staticmethod
    def _check_labels(labels, count, prefix) -> tuple[str, ...]:
        if labels is None:
            return _default_labels(prefix, count)
        labels = tuple(str(s) for s in labels)
        if len(labels) != count:
            raise ValidationError(
                f"{prefix} labels: got {len(labels)} names for {count} entries"
            )
        return labels

    @property
    def n_respondents(self) -> int:
        return self.x.shape[0]

    @property
    def n_known(self) -> int:
        return self.x.shape[1]

    @property
    def n_unknown(self) -> int:
        return self.y.shape[1]


def pi_frequencies(data: SurveyData) -> NDArray[np.float64]:
    """Population frequencies of the known groups, ``known_sizes / N``."""
    return data.known_sizes / data.total_population


def _prior_vector(values, length: int, name: str) -> NDArray[np.float64]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(length, float(arr))
    if arr.shape != (length,):
        raise ValidationError(f"{name} has shape {arr.shape}, expected ({length},)")
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ValidationError(f"{name} entries must be strictly positive")
    return arr


@dataclass(frozen=True)
class PriorSpec:
    """Beta(a, b) hyperparameters per unknown population and Gamma(c, d)
    shape/rate hyperparameters per respondent degree."""

    a: NDArray[np.float64]
    b: NDArray[np.float64]
    c: NDArray[np.float64]
    d: NDArray[np.float64]

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        object.__setattr__(self, "a", _prior_vector(self.a, a.shape[0] if a.ndim else 1, "a"))
        object.__setattr__(self, "b", _prior_vector(self.b, self.a.shape[0], "b"))
        object.__setattr__(self, "c", _prior_vector(self.c, c.shape[0] if c.ndim else 1, "c"))
        object.__setattr__(self, "d", _prior_vector(self.d, self.c.shape[0], "d"))

    @classmethod
    def default(cls, data: SurveyData, a=1.0, b=1.0, c=2.0, d=0.01) -> "PriorSpec":
        """Flat Beta(1, 1) on frequencies; Gamma(2, 0.01) on degrees
        (mean 200 contacts, sd roughly 141)."""
        u, n = data.n_unknown, data.n_respondents
        return cls(
            a=_prior_vector(a, u, "a"),
            b=_prior_vector(b, u, "b"),
            c=_prior_vector(c, n, "c"),
            d=_prior_vector(d, n, "d"),
        )

    def matches(self, data: SurveyData) -> None:
        if self.a.shape[0] != data.n_unknown:
            raise ValidationError(
                f"prior a/b length {self.a.shape[0]} != {data.n_unknown} unknown populations"
            )
        if self.c.shape[0] != data.n_respondents:
            raise ValidationError(
                f"prior c/d length {self.c.shape[0]} != {data.n_respondents} respondents"
            )


@dataclass(frozen=True)
class BetaParams:
    """Parameters of a Beta full conditional."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValidationError(
                f"Beta parameters must be positive, got ({self.alpha}, {self.beta})"
            )


@dataclass(frozen=True)
class TruncGammaParams:
    """Shape/rate Gamma restricted to ``(lower, inf)``."""

    shape: float
    rate: float
    lower: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise ValidationError(f"shape must be positive, got {self.shape}")
        if not (np.isfinite(self.rate) and self.rate > 0):
            raise ValidationError(f"rate must be positive, got {self.rate}")
        if not (np.isfinite(self.lower) and self.lower >= 0):
            raise ValidationError(f"lower must be nonnegative, got {self.lower}")

    @property
    def mean_untruncated(self) -> float:
        return self.shape / self.rate


@dataclass(frozen=True)
class LatentState:
    """One point in the latent space: unknown frequencies and degrees."""

    theta: NDArray[np.float64]
    delta: NDArray[np.float64]

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        delta = np.asarray(self.delta, dtype=np.float64)
        if theta.ndim != 1 or delta.ndim != 1:
            raise ValidationError("theta and delta must be 1-d vectors")
        if np.any(~np.isfinite(theta)) or np.any(theta <= 0) or np.any(theta >= 1):
            raise ValidationError("theta entries must lie strictly in (0, 1)")
        if np.any(~np.isfinite(delta)) or np.any(delta <= 0):
            raise ValidationError("delta entries must be strictly positive")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "delta", delta)


def row_maxima(data: SurveyData) -> NDArray[np.float64]:
    """Per-respondent maximum over every reported count (known and unknown)."""
    return np.maximum(data.x.max(axis=1), data.y.max(axis=1)).astype(np.float64)


def theta_full_conditional(
    data: SurveyData,
    delta: NDArray[np.float64],
    u: int,
    prior: PriorSpec,
) -> BetaParams:
    """Beta full conditional of the frequency of unknown population ``u``.

    Conjugacy is exact under the binomial likelihood, so every engine shares
    this update: alpha = sum_i y[i, u] + a[u], beta = sum_i (delta[i] - y[i, u]) + b[u].
    """
    prior.matches(data)
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (data.n_respondents,):
        raise ValidationError(
            f"delta has shape {delta.shape}, expected ({data.n_respondents},)"
        )
    if not 0 <= u < data.n_unknown:
        raise ValidationError(f"population index {u} out of range")
    yu = data.y[:, u]
    short = np.nonzero(delta < yu)[0]
    if short.size:
        raise ValidationError(
            f"degrees below reported counts for population {u} at respondents "
            f"{short.tolist()}"
        )
    alpha = float(yu.sum() + prior.a[u])
    beta = float(np.sum(delta - yu) + prior.b[u])
    return BetaParams(alpha=alpha, beta=beta)


def delta_full_conditional(
    data: SurveyData,
    theta: NDArray[np.float64],
    i: int,
    prior: PriorSpec,
) -> TruncGammaParams:
    """Truncated-Gamma full conditional of respondent ``i``'s degree.

    Uses the Poisson approximation to the binomial cells, which makes the
    Gamma prior conjugate; the support is truncated at the respondent's
    largest reported count.
    """
    prior.matches(data)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (data.n_unknown,):
        raise ValidationError(
            f"theta has shape {theta.shape}, expected ({data.n_unknown},)"
        )
    if np.any(theta <= 0) or np.any(theta >= 1):
        raise ValidationError("theta entries must lie strictly in (0, 1)")
    if not 0 <= i < data.n_respondents:
        raise ValidationError(f"respondent index {i} out of range")
    shape = float(data.y[i].sum() + data.x[i].sum() + prior.c[i])
    rate = float(theta.sum() + pi_frequencies(data).sum() + prior.d[i])
    lower = float(max(data.x[i].max(), data.y[i].max()))
    return TruncGammaParams(shape=shape, rate=rate, lower=lower)


LikelihoodMode = Literal["continuous-binomial", "poisson-approx"]


def log_likelihood(
    data: SurveyData,
    state: LatentState,
    mode: LikelihoodMode = "continuous-binomial",
) -> float:
    """Joint log-likelihood of every count cell at the given latent state.

    ``continuous-binomial`` evaluates the real-degree extension of the
    binomial mass through log-Gamma functions and returns ``-inf`` when any
    degree falls below that respondent's largest count (out of support).
    ``poisson-approx`` evaluates Poisson masses with means ``delta * theta``
    and ``delta * pi``, the approximation the conjugate updates rely on.
    """
    if mode not in ("continuous-binomial", "poisson-approx"):
        raise ValidationError(f"unknown likelihood mode {mode!r}")
    theta, delta = state.theta, state.delta
    if theta.shape != (data.n_unknown,) or delta.shape != (data.n_respondents,):
        raise ValidationError("state dimensions do not match the survey data")
    pi = pi_frequencies(data)
    y = data.y
    x = data.x

    if mode == "poisson-approx":
        mu_y = delta[:, None] * theta[None, :]
        mu_x = delta[:, None] * pi[None, :]
        ll = np.sum(y * np.log(mu_y) - mu_y - gammaln(y + 1.0))
        ll += np.sum(x * np.log(mu_x) - mu_x - gammaln(x + 1.0))
        return float(ll)

    if np.any(delta < row_maxima(data)):
        return float("-inf")
    d_col = delta[:, None]
    ll = np.sum(
        gammaln(d_col + 1.0)
        - gammaln(y + 1.0)
        - gammaln(d_col - y + 1.0)
        + y * np.log(theta)[None, :]
        + (d_col - y) * np.log1p(-theta)[None, :]
    )
    ll += np.sum(
        gammaln(d_col + 1.0)
        - gammaln(x + 1.0)
        - gammaln(d_col - x + 1.0)
        + x * np.log(pi)[None, :]
        + (d_col - x) * np.log1p(-pi)[None, :]
    )
    return float(ll)


@dataclass(frozen=True)
class DrawMatrix:
    """Posterior draws organized as (chain, stored iteration, parameter).

    Parameters are the unknown-population frequencies first (``n_unknown``
    of them), then one degree per respondent.  ``iterations`` is the raw
    per-chain count before burn-in and thinning; the stored second axis
    must equal ``(iterations - burn_in) // thin`` exactly.
    """

    draws: NDArray[np.float64]
    parameters: tuple[str, ...]
    n_unknown: int
    engine: str
    seed: int
    iterations: int
    burn_in: int
    thin: int
    wall_seconds: float
    config_hash: str = ""
    acceptance_rates: NDArray[np.float64] | None = None
    clamped_contributions: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=np.float64)
        if draws.ndim != 3:
            raise ValidationError(f"draws must be 3-d, got shape {draws.shape}")
        n_chain, kept, n_param = draws.shape
        if len(self.parameters) != n_param:
            raise ValidationError(
                f"{len(self.parameters)} parameter names for {n_param} columns"
            )
        if not 0 < self.n_unknown <= n_param:
            raise ValidationError("n_unknown out of range")
        expected = (self.iterations - self.burn_in) // self.thin
        if kept != expected:
            raise ValidationError(
                f"stored iterations {kept} != (iterations - burn_in) // thin = {expected}"
            )
        theta = draws[:, :, : self.n_unknown]
        if theta.size and (np.any(theta <= 0) or np.any(theta >= 1)):
            raise ValidationError("frequency draws must lie strictly in (0, 1)")
        degrees = draws[:, :, self.n_unknown:]
        if degrees.size and np.any(degrees <= 0):
            raise ValidationError("degree draws must be strictly positive")
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "parameters", tuple(self.parameters))

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def kept_per_chain(self) -> int:
        return self.draws.shape[1]

    @property
    def n_parameters(self) -> int:
        return self.draws.shape[2]

    def theta_draws(self) -> NDArray[np.float64]:
        """View of the frequency draws, shape (chains, kept, n_unknown)."""
        return self.draws[:, :, : self.n_unknown]

    def degree_draws(self) -> NDArray[np.float64]:
        """View of the degree draws, shape (chains, kept, n_respondents)."""
        return self.draws[:, :, self.n_unknown:]

    def pooled(self) -> NDArray[np.float64]:
        """All chains stacked, shape (chains * kept, parameters)."""
        return self.draws.reshape(-1, self.draws.shape[2])
