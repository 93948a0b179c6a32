"""Convergence and sample-quality diagnostics.

Implements the classical potential scale reduction factor (Gelman-Rubin),
the Geweke first-vs-last window z-score with spectral-density-at-zero
variance estimates, the Raftery-Lewis two-state Markov chain run-length
analysis on quantile indicator sequences, and effective sample size via
Geyer's initial positive sequence.  Every constant has a conventional
default and is exposed through ``DiagnosticsConfig``.

Degenerate inputs (zero variance) raise ``DegenerateChainError`` from the
individual estimators; report assembly converts those into typed
"degenerate" entries instead of silent NaNs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .model import DrawMatrix


class DiagnosticError(ValueError):
    """Base class for diagnostic failures."""


class DegenerateChainError(DiagnosticError):
    """The chain carries no variance, so the statistic is undefined."""


class InsufficientDrawsError(DiagnosticError):
    """Chain shorter than the Raftery-Lewis pilot length ``n_min``."""

    def __init__(self, n_min: int, length: int):
        self.n_min = int(n_min)
        self.length = int(length)
        super().__init__(
            f"insufficient draws: need at least {n_min}, have {length}"
        )


def _as_chain(chain, min_length: int, name: str = "chain") -> np.ndarray:
    arr = np.asarray(chain, dtype=np.float64).ravel()
    if arr.size < min_length:
        raise DiagnosticError(
            f"{name} must have length >= {min_length}, got {arr.size}"
        )
    if not np.all(np.isfinite(arr)):
        raise DiagnosticError(f"{name} contains non-finite values")
    return arr


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor over two or more equal-length chains.

    Classical between/within variance decomposition with the Gelman-Rubin
    degrees-of-freedom correction.  Sampling noise can push the raw
    statistic marginally below one; the result is floored at 1.0.
    """
    try:
        arr = np.asarray(chains, dtype=np.float64)
    except ValueError:
        raise DiagnosticError("chains must all have the same length") from None
    if arr.ndim != 2:
        raise DiagnosticError("chains must form a 2-d (chain, draw) array")
    m, length = arr.shape
    if m < 2:
        raise DiagnosticError("need at least two chains")
    if length < 10:
        raise DiagnosticError("chains must have length >= 10")
    if not np.all(np.isfinite(arr)):
        raise DiagnosticError("chains contain non-finite values")

    within_vars = arr.var(axis=1, ddof=1)
    w = within_vars.mean()
    if not w > 0:
        raise DegenerateChainError("all chains are constant; PSRF is degenerate")

    means = arr.mean(axis=1)
    b_over_n = means.var(ddof=1)  # = B / length
    v_hat = (length - 1) / length * w + (1.0 + 1.0 / m) * b_over_n

    # Degrees-of-freedom correction: d = 2 V^2 / var(V).
    var_w = within_vars.var(ddof=1) / m if m > 1 else 0.0
    grand = means.mean()
    cov_s2_m2 = _sample_cov(within_vars, means**2)
    cov_s2_m = _sample_cov(within_vars, means)
    b = length * b_over_n
    var_v = (
        ((length - 1) / length) ** 2 * var_w
        + ((m + 1) / (m * length)) ** 2 * (2.0 / (m - 1)) * b**2
        + 2.0 * (m + 1) * (length - 1) / (m * length**2)
        * (length / m) * (cov_s2_m2 - 2.0 * grand * cov_s2_m)
    )
    if np.isfinite(var_v) and var_v > 0:
        d = 2.0 * v_hat**2 / var_v
        correction = (d + 3.0) / (d + 1.0)
    else:
        correction = 1.0

    psrf = math.sqrt(max(correction * v_hat / w, 1.0))
    return float(psrf)


def _sample_cov(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2:
        return 0.0
    return float(np.cov(a, b, ddof=1)[0, 1])


def _autocovariances(segment: np.ndarray, n_lags: int) -> np.ndarray:
    n = segment.size
    centered = segment - segment.mean()
    size = 1
    while size < 2 * n:
        size <<= 1
    f = np.fft.rfft(centered, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: n_lags + 1].real / n
    return acov


def _spectral_density_zero(segment: np.ndarray) -> float:
    """Bartlett-windowed estimate of the spectral density at frequency zero."""
    n = segment.size
    window = max(1, int(math.sqrt(n)))
    acov = _autocovariances(segment, window)
    weights = 1.0 - np.arange(1, window + 1) / (window + 1.0)
    return float(acov[0] + 2.0 * np.sum(weights * acov[1:]))


def geweke(chain, first_frac: float = 0.1, last_frac: float = 0.5) -> float:
    """Z-score comparing the mean of the first and last chain windows.

    Window variances come from Bartlett-windowed spectral density estimates
    at zero, so autocorrelation inflates the standard errors as it should.
    """
    arr = _as_chain(chain, 100)
    if not (0 < first_frac < 1 and 0 < last_frac < 1 and first_frac + last_frac <= 1):
        raise DiagnosticError("window fractions must be positive and sum to <= 1")
    n = arr.size
    head = arr[: max(2, int(n * first_frac))]
    tail = arr[-max(2, int(n * last_frac)):]
    s0_head = _spectral_density_zero(head)
    s0_tail = _spectral_density_zero(tail)
    denom = s0_head / head.size + s0_tail / tail.size
    if not denom > 0:
        raise DegenerateChainError("zero spectral variance; chain is degenerate")
    return float((head.mean() - tail.mean()) / math.sqrt(denom))


def effective_sample_size(chain) -> float:
    """ESS through Geyer's initial positive sequence of autocorrelation pairs.

    Truncated to the chain length: thinning and estimator noise can push the
    raw estimate above the number of draws, which the definition forbids.
    """
    arr = _as_chain(chain, 10)
    n = arr.size
    acov = _autocovariances(arr, n - 1)
    if not acov[0] > 0:
        raise DegenerateChainError("constant chain; ESS is degenerate")
    rho = acov / acov[0]
    tau = -1.0
    for t in range(0, n // 2):
        pair = rho[2 * t] + (rho[2 * t + 1] if 2 * t + 1 < n else 0.0)
        if pair <= 0:
            break
        tau += 2.0 * pair
    tau = max(tau, 1.0 / n)
    return float(min(n, n / tau))


def autocorrelation(chain, max_lag: int = 20) -> np.ndarray:
    """Autocorrelations at lags 1..max_lag."""
    arr = _as_chain(chain, 2)
    if max_lag < 1:
        raise DiagnosticError("max_lag must be >= 1")
    lags = min(max_lag, arr.size - 1)
    acov = _autocovariances(arr, lags)
    if not acov[0] > 0:
        raise DegenerateChainError("constant chain; autocorrelation is degenerate")
    out = np.full(max_lag, np.nan)
    out[:lags] = acov[1 : lags + 1] / acov[0]
    return out


def raftery_lewis_nmin(q: float = 0.025, r: float = 0.005, s: float = 0.95) -> int:
    """Pilot length: draws needed for the q-quantile were the chain i.i.d."""
    if not 0 < q < 1:
        raise DiagnosticError("q must lie in (0, 1)")
    if not 0 < r < 1:
        raise DiagnosticError("r must lie in (0, 1)")
    if not 0 < s < 1:
        raise DiagnosticError("s must lie in (0, 1)")
    phi = ndtri(0.5 * (1.0 + s))
    return int(math.ceil((phi / r) ** 2 * q * (1.0 - q)))


@dataclass(frozen=True)
class RafteryLewisResult:
    """Run-length prescription for one chain and one quantile."""

    n_min: int
    burn_in: int
    n_required: int
    thin: int
    dependence_factor: float


def raftery_lewis(
    chain,
    q: float = 0.025,
    r: float = 0.005,
    s: float = 0.95,
    converge_eps: float = 0.001,
) -> RafteryLewisResult:
    """Raftery-Lewis run-length diagnostic for estimating the q-quantile
    to within +/- r with probability s.

    Dichotomizes at the empirical quantile, finds the smallest thinning at
    which the indicator behaves as a first-order two-state Markov chain (BIC
    comparison against second order), then converts the fitted transition
    probabilities into burn-in and run-length requirements.
    """
    n_min = raftery_lewis_nmin(q, r, s)
    arr = _as_chain(chain, 2)
    if arr.size < n_min:
        raise InsufficientDrawsError(n_min=n_min, length=arr.size)

    cutoff = np.quantile(arr, q)
    indicator = (arr <= cutoff).astype(np.int64)
    if indicator.min() == indicator.max():
        raise DegenerateChainError("quantile indicator is constant")

    phi = ndtri(0.5 * (1.0 + s))
    kthin = 0
    while True:
        kthin += 1
        sub = indicator[::kthin]
        if sub.size < 3 or sub.min() == sub.max():
            raise DegenerateChainError(
                "indicator sequence degenerates under thinning"
            )
        triples = sub[:-2] * 4 + sub[1:-1] * 2 + sub[2:]
        counts = np.bincount(triples, minlength=8).reshape(2, 2, 2).astype(np.float64)
        mid = counts.sum(axis=(0, 2))
        g2 = 0.0
        for i0 in range(2):
            for i1 in range(2):
                for i2 in range(2):
                    obs = counts[i0, i1, i2]
                    if obs > 0:
                        fitted = counts[i0, i1, :].sum() * counts[:, i1, i2].sum() / mid[i1]
                        g2 += 2.0 * obs * math.log(obs / fitted)
        bic = g2 - math.log(sub.size - 2.0) * 2.0
        if bic < 0:
            break

    pairs = sub[:-1] * 2 + sub[1:]
    t = np.bincount(pairs, minlength=4).reshape(2, 2).astype(np.float64)
    from0 = t[0, 0] + t[0, 1]
    from1 = t[1, 0] + t[1, 1]
    if from0 == 0 or from1 == 0:
        raise DegenerateChainError("two-state chain never leaves one state")
    alpha = t[0, 1] / from0
    beta = t[1, 0] / from1

    lam = abs(1.0 - alpha - beta)
    if lam == 0.0 or alpha + beta == 0.0:
        burn_steps = 1.0
    else:
        burn_steps = math.ceil(
            math.log(converge_eps * (alpha + beta) / max(alpha, beta)) / math.log(lam)
        )
    burn = int(max(burn_steps, 1.0)) * kthin
    keep = math.ceil(
        (2.0 - alpha - beta) * alpha * beta * phi**2 / ((alpha + beta) ** 3 * r**2)
    ) * kthin
    n_required = int(keep)
    factor = (burn + n_required) / n_min
    return RafteryLewisResult(
        n_min=n_min,
        burn_in=burn,
        n_required=n_required,
        thin=kthin,
        dependence_factor=float(factor),
    )


# ---------------------------------------------------------------------------
# Report assembly


@dataclass(frozen=True)
class DiagnosticsConfig:
    """Thresholds and window settings; conventional defaults."""

    rhat_threshold: float = 1.1
    # Calibrated for many-parameter runs: a full survey diagnoses ~2000
    # (parameter, chain) pairs, and the short-window spectral z has t-like
    # tails, so a per-comparison cut of 4 would flag most converged runs.
    geweke_threshold: float = 6.0
    dependence_threshold: float = 5.0
    geweke_first: float = 0.1
    geweke_last: float = 0.5
    rl_q: float = 0.025
    rl_r: float = 0.005
    rl_s: float = 0.95
    rl_converge_eps: float = 0.001
    max_lag: int = 20


@dataclass(frozen=True)
class Flag:
    parameter: str
    diagnostic: str
    value: float
    threshold: float

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "diagnostic": self.diagnostic,
            "value": self.value,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class DiagnosticsReport:
    """Per-parameter convergence diagnostics for one DrawMatrix.

    ``rhat`` entries are None when fewer than two chains are available or
    the parameter is degenerate; ``statuses`` records why.  ``raftery`` is
    indexed [parameter][chain] and holds either a RafteryLewisResult or a
    string marker ("insufficient draws, need N" / "degenerate").  Geweke
    stores the worst (largest |z|) chain per parameter; ESS sums chains.
    """

    parameters: tuple[str, ...]
    rhat: tuple
    geweke_z: tuple
    ess: tuple
    autocorrelations: np.ndarray
    raftery: tuple
    statuses: tuple
    flags: tuple
    config: DiagnosticsConfig
    n_chains: int
    kept_per_chain: int
    engine: str = ""
    seed: int = 0
    config_hash: str = ""

    @property
    def flagged(self) -> bool:
        return len(self.flags) > 0

    @property
    def raftery_max_required(self) -> int | None:
        """Largest total run length (burn-in + kept) any parameter demands.

        One parameter always drives the run-length requirement; this is the
        number of raw draws that satisfies all of them.  None when no
        Raftery-Lewis analysis was computable.
        """
        worst = None
        for per_param in self.raftery:
            for item in per_param:
                if isinstance(item, RafteryLewisResult):
                    need = item.burn_in + item.n_required
                    if worst is None or need > worst:
                        worst = need
        return worst

    def to_dict(self) -> dict:
        def rl_entry(item):
            if isinstance(item, RafteryLewisResult):
                return {
                    "n_min": item.n_min,
                    "burn_in": item.burn_in,
                    "n_required": item.n_required,
                    "thin": item.thin,
                    "dependence_factor": item.dependence_factor,
                }
            return str(item)

        return {
            "engine": self.engine,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "n_chains": self.n_chains,
            "kept_per_chain": self.kept_per_chain,
            "raftery_max_required": self.raftery_max_required,
            "thresholds": {
                "rhat": self.config.rhat_threshold,
                "geweke_abs_z": self.config.geweke_threshold,
                "dependence_factor": self.config.dependence_threshold,
            },
            "parameters": [
                {
                    "name": name,
                    "status": self.statuses[j],
                    "rhat": self.rhat[j],
                    "geweke_z": self.geweke_z[j],
                    "ess": self.ess[j],
                    "autocorrelations": [
                        None if np.isnan(v) else float(v)
                        for v in self.autocorrelations[j]
                    ],
                    "raftery_lewis": [rl_entry(it) for it in self.raftery[j]],
                }
                for j, name in enumerate(self.parameters)
            ],
            "flags": [f.to_dict() for f in self.flags],
            "flagged": self.flagged,
        }


def diagnose(draws: DrawMatrix, config: DiagnosticsConfig | None = None) -> DiagnosticsReport:
    """Run every diagnostic over every parameter of a DrawMatrix."""
    cfg = config or DiagnosticsConfig()
    arr = draws.draws  # (chains, kept, params)
    n_chains, kept, n_params = arr.shape

    rhats: list = []
    gewekes: list = []
    esses: list = []
    acfs = np.full((n_params, cfg.max_lag), np.nan)
    rl_all: list = []
    statuses: list = []
    flags: list[Flag] = []

    for j, name in enumerate(draws.parameters):
        series = arr[:, :, j]
        status = "ok"

        if n_chains >= 2:
            try:
                r = gelman_rubin(series)
            except DegenerateChainError:
                r, status = None, "degenerate"
            except DiagnosticError:
                r = None
        else:
            r = None
        rhats.append(r)
        if r is not None and r > cfg.rhat_threshold:
            flags.append(Flag(name, "rhat", r, cfg.rhat_threshold))

        z_worst = None
        try:
            for c in range(n_chains):
                z = geweke(series[c], cfg.geweke_first, cfg.geweke_last)
                if z_worst is None or abs(z) > abs(z_worst):
                    z_worst = z
        except DegenerateChainError:
            z_worst, status = None, "degenerate"
        except DiagnosticError:
            z_worst = None
        gewekes.append(z_worst)
        if z_worst is not None and abs(z_worst) > cfg.geweke_threshold:
            flags.append(Flag(name, "geweke", z_worst, cfg.geweke_threshold))

        try:
            ess_total = float(sum(effective_sample_size(series[c]) for c in range(n_chains)))
        except DegenerateChainError:
            ess_total, status = None, "degenerate"
        except DiagnosticError:
            ess_total = None
        esses.append(ess_total)

        try:
            per_chain_acf = np.array(
                [autocorrelation(series[c], cfg.max_lag) for c in range(n_chains)]
            )
            defined = ~np.all(np.isnan(per_chain_acf), axis=0)
            if defined.any():
                acfs[j, defined] = np.nanmean(per_chain_acf[:, defined], axis=0)
        except (DegenerateChainError, DiagnosticError):
            pass

        per_chain = []
        for c in range(n_chains):
            try:
                res = raftery_lewis(
                    series[c], cfg.rl_q, cfg.rl_r, cfg.rl_s, cfg.rl_converge_eps
                )
                per_chain.append(res)
                if res.dependence_factor > cfg.dependence_threshold:
                    flags.append(
                        Flag(name, "dependence_factor", res.dependence_factor,
                             cfg.dependence_threshold)
                    )
            except InsufficientDrawsError as exc:
                # Informational: tells the operator the required run length
                # without failing runs that were sized deliberately short.
                per_chain.append(f"insufficient draws, need {exc.n_min}")
            except DegenerateChainError:
                per_chain.append("degenerate")
        rl_all.append(tuple(per_chain))
        statuses.append(status)

    return DiagnosticsReport(
        parameters=draws.parameters,
        rhat=tuple(rhats),
        geweke_z=tuple(gewekes),
        ess=tuple(esses),
        autocorrelations=acfs,
        raftery=tuple(rl_all),
        statuses=tuple(statuses),
        flags=tuple(flags),
        config=cfg,
        n_chains=n_chains,
        kept_per_chain=kept,
        engine=draws.engine,
        seed=draws.seed,
        config_hash=draws.config_hash,
    )
