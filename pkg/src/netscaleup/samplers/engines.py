"""The three posterior engines for the random-degree scale-up model.

* ``run_mh``    -- Metropolis-within-Gibbs baseline: conjugate Beta updates
  for the frequencies, Gaussian random walks on log-degrees accepted
  against the exact continuous-binomial likelihood.
* ``run_gibbs`` -- full Gibbs sampler: conjugate Beta updates plus
  truncated-Gamma degree updates from the Poisson-approximated conditional.
* ``run_mc``    -- non-iterative Monte Carlo: degrees drawn independently
  from their known-population-only truncated-Gamma marginals, frequencies
  drawn conditionally per draw.  No Markov chain, so no burn-in or
  autocorrelation; burn-in/thin settings only size its output to match the
  MCMC engines draw-for-draw.

Chains never share mutable state.  Each chain owns two counter-based RNG
streams (one for the frequency block, one for the degree block) derived
deterministically from ``(seed, chain index)``, so results are identical
whether chains run sequentially or in a process pool.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import gammainc, gammainccinv, gammaln

from ..model import (
    DrawMatrix,
    LatentState,
    PriorSpec,
    SurveyData,
    ValidationError,
    pi_frequencies,
    row_maxima,
)
from .truncgamma import TAIL_EPS, _Q_FLOOR, _tail_rejection_scalar, trunc_gamma_draws

ENGINES = ("mh", "gibbs", "mc")

# Chunk length for the Monte Carlo frequency block; fixed (not configurable)
# so the RNG consumption order, and therefore the draws, are reproducible.
_MC_CHUNK = 16384

# Above this much mass in the truncated region the Monte Carlo engine
# samples degrees by vectorized rejection instead of the inverse CDF; both
# are exact, rejection is an order of magnitude faster in bulk.
_MC_REJECTION_MIN_TAIL = 0.1

ProgressCallback = Callable[[dict], None]


@dataclass(frozen=True)
class RunConfig:
    """Engine choice plus chain/iteration bookkeeping and MH tuning.

    ``(iterations - burn_in)`` need not divide ``thin``; the remainder is
    dropped (floor division).
    """

    engine: str = "gibbs"
    chains: int = 4
    iterations: int = 80_000
    burn_in: int = 10_000
    thin: int = 70
    seed: int = 0
    mh_target_acceptance: float = 0.44
    mh_initial_step: float = 0.5
    parallel: int = 1

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValidationError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.chains < 1:
            raise ValidationError("chains must be a positive integer")
        if self.iterations < 1:
            raise ValidationError("iterations must be a positive integer")
        if not 0 <= self.burn_in < self.iterations:
            raise ValidationError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValidationError("thin must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")
        if not 0 < self.mh_target_acceptance < 1:
            raise ValidationError("mh_target_acceptance must lie in (0, 1)")
        if self.mh_initial_step <= 0:
            raise ValidationError("mh_initial_step must be positive")
        if self.parallel < 1:
            raise ValidationError("parallel must be a positive integer")
        if self.kept_per_chain < 1:
            raise ValidationError(
                "no draws survive burn-in and thinning; lower burn_in or thin"
            )

    @property
    def kept_per_chain(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def hash(self) -> str:
        payload = {
            "engine": self.engine,
            "chains": self.chains,
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": int(self.seed),
            "mh_target_acceptance": self.mh_target_acceptance,
            "mh_initial_step": self.mh_initial_step,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def chain_streams(seed: int, chain: int):
    """Two independent Philox streams for one chain: (frequency block, degree block)."""
    root = np.random.SeedSequence(entropy=(int(seed), int(chain)))
    freq_seq, degree_seq = root.spawn(2)
    return (
        np.random.Generator(np.random.Philox(freq_seq)),
        np.random.Generator(np.random.Philox(degree_seq)),
    )


def initialize_state(data: SurveyData, prior: PriorSpec, rng=None) -> LatentState:
    """Classical scale-up starting point.

    Degrees start at ``max(M_i + 1, sum_k x[i, k] / sum_k pi[k])`` (the ratio
    estimator floored just above the largest reported count); frequencies at
    the pooled ratio ``sum_i y[i, u] / sum_i delta_hat[i]`` clamped into
    (1e-8, 1 - 1e-8).  Deterministic; ``rng`` is accepted for interface
    uniformity with the samplers but not consumed.
    """
    prior.matches(data)
    pi_sum = pi_frequencies(data).sum()
    ratio = data.x.sum(axis=1) / pi_sum
    delta_hat = np.maximum(row_maxima(data) + 1.0, ratio)
    theta_hat = data.y.sum(axis=0) / delta_hat.sum()
    theta_hat = np.clip(theta_hat, 1e-8, 1.0 - 1e-8)
    return LatentState(theta=theta_hat, delta=delta_hat)


@dataclass(frozen=True)
class _Precomp:
    """Constants every engine reuses across iterations."""

    sum_y: np.ndarray        # (U,) column sums of unknown counts
    count_rows: np.ndarray   # (n,) per-respondent total reported contacts
    max_all: np.ndarray      # (n,) max count over known and unknown columns
    max_known: np.ndarray    # (n,) max count over known columns only
    pi: np.ndarray           # (K,)
    pi_sum: float

    @classmethod
    def build(cls, data: SurveyData) -> "_Precomp":
        pi = pi_frequencies(data)
        return cls(
            sum_y=data.y.sum(axis=0).astype(np.float64),
            count_rows=(data.y.sum(axis=1) + data.x.sum(axis=1)).astype(np.float64),
            max_all=row_maxima(data),
            max_known=data.x.max(axis=1).astype(np.float64),
            pi=pi,
            pi_sum=float(pi.sum()),
        )


def _keep_index(m: int, config: RunConfig) -> int:
    """Stored-row index for raw iteration m (1-based), or -1 if discarded."""
    past = m - config.burn_in
    if past <= 0 or past % config.thin:
        return -1
    return past // config.thin - 1


def _parameter_names(data: SurveyData) -> tuple[str, ...]:
    names = [f"theta:{lbl}" for lbl in data.unknown_labels]
    names += [f"degree:{lbl}" for lbl in data.respondent_labels]
    return tuple(names)


# ---------------------------------------------------------------------------
# Gibbs


def _gibbs_chain(data, prior, config, chain, pre, progress=None):
    rng_freq, rng_degree = chain_streams(config.seed, chain)
    n, u_count = data.n_respondents, data.n_unknown
    state = initialize_state(data, prior, rng_freq)
    delta = state.delta
    delta_sum = delta.sum()
    shape = pre.count_rows + prior.c  # constant across iterations

    out = np.empty((config.kept_per_chain, u_count + n))
    for m in range(1, config.iterations + 1):
        # Frequencies from the previous iteration's degrees, then all
        # degrees from the fresh frequencies.
        theta = rng_freq.beta(pre.sum_y + prior.a, delta_sum - pre.sum_y + prior.b)
        rate = theta.sum() + pre.pi_sum + prior.d
        delta = trunc_gamma_draws(shape, rate, pre.max_all, rng_degree)
        delta_sum = delta.sum()
        j = _keep_index(m, config)
        if j >= 0:
            out[j, :u_count] = theta
            out[j, u_count:] = delta
        if progress is not None and m % 1000 == 0:
            progress({"engine": "gibbs", "chain": chain, "iteration": m,
                      "total": config.iterations})
    return out


# ---------------------------------------------------------------------------
# Metropolis-Hastings baseline

# The degree target factorizes per respondent.  Collecting the terms that
# depend on delta gives  G_i(delta) + delta * S(theta)  with
#   G_i(delta) = (U + K) lgamma(delta + 1)
#                - sum_u lgamma(delta - y_iu + 1) - sum_k lgamma(delta - x_ik + 1)
#                + (c_i - 1) log delta - d_i delta
#   S(theta)   = sum_u log(1 - theta_u) + sum_k log(1 - pi_k)
# so a theta refresh never invalidates the cached G values.


def _mh_g_terms(delta, y, x, c, d, n_cells):
    t = n_cells * gammaln(delta + 1.0)
    t -= gammaln(delta[:, None] - y + 1.0).sum(axis=1)
    t -= gammaln(delta[:, None] - x + 1.0).sum(axis=1)
    return t + (c - 1.0) * np.log(delta) - d * delta


def _mh_chain(data, prior, config, chain, pre, progress=None):
    rng_freq, rng_degree = chain_streams(config.seed, chain)
    n, u_count, k_count = data.n_respondents, data.n_unknown, data.n_known
    n_cells = u_count + k_count
    y, x = data.y, data.x

    state = initialize_state(data, prior, rng_freq)
    delta = state.delta
    log_delta = np.log(delta)
    delta_sum = delta.sum()
    g_cur = _mh_g_terms(delta, y, x, prior.c, prior.d, n_cells)
    step = np.full(n, config.mh_initial_step)
    log_pi_comp = np.log1p(-pre.pi).sum()

    out = np.empty((config.kept_per_chain, u_count + n))
    accepted_post = np.zeros(n)
    post_iters = 0
    for m in range(1, config.iterations + 1):
        theta = rng_freq.beta(pre.sum_y + prior.a, delta_sum - pre.sum_y + prior.b)
        slope = np.log1p(-theta).sum() + log_pi_comp

        log_prop = log_delta + step * rng_degree.normal(size=n)
        prop = np.exp(log_prop)
        ok = prop >= pre.max_all
        g_prop = np.full(n, -np.inf)
        if ok.any():
            g_prop[ok] = _mh_g_terms(prop[ok], y[ok], x[ok], prior.c[ok],
                                     prior.d[ok], n_cells)
        # log ratio includes the log-scale proposal Jacobian (log_prop - log_delta)
        log_ratio = (g_prop - g_cur) + (prop - delta) * slope + (log_prop - log_delta)
        accept = np.log(rng_degree.uniform(size=n)) < log_ratio
        log_delta = np.where(accept, log_prop, log_delta)
        delta = np.where(accept, prop, delta)
        g_cur = np.where(accept, g_prop, g_cur)
        delta_sum = delta.sum()

        if m <= config.burn_in:
            # Robbins-Monro on the log step, frozen after burn-in.
            gain = min(0.3, 4.0 / m**0.6)
            step *= np.exp(gain * (accept - config.mh_target_acceptance))
        else:
            accepted_post += accept
            post_iters += 1

        j = _keep_index(m, config)
        if j >= 0:
            out[j, :u_count] = theta
            out[j, u_count:] = delta
        if progress is not None and m % 1000 == 0:
            progress({"engine": "mh", "chain": chain, "iteration": m,
                      "total": config.iterations,
                      "acceptance": float(accept.mean())})
    rates = accepted_post / max(post_iters, 1)
    return out, rates


# ---------------------------------------------------------------------------
# Monte Carlo (non-iterative)


def _mc_degree_column(shape, rate, lower, n_draws, rng):
    """Exact draws from one respondent's truncated Gamma, chosen by regime.

    Fixed parameters across the whole column let us pick the cheapest exact
    sampler: bulk rejection while the truncated region keeps enough mass,
    the inverse CDF when it does not, and the shifted-exponential tail
    sampler in the extreme regime.
    """
    p_low = float(gammainc(shape, rate * lower))
    tail = 1.0 - p_low
    if tail >= _MC_REJECTION_MIN_TAIL:
        draws = rng.gamma(shape, 1.0 / rate, n_draws)
        bad = draws <= lower
        n_bad = int(bad.sum())
        while n_bad:
            draws[bad] = rng.gamma(shape, 1.0 / rate, n_bad)
            bad = draws <= lower
            n_bad = int(bad.sum())
        return draws
    if tail >= TAIL_EPS:
        u = rng.uniform(size=n_draws)
        draws = gammainccinv(shape, np.fmax(tail * (1.0 - u), _Q_FLOOR)) / rate
        return np.maximum(draws, np.nextafter(lower, np.inf))
    return np.array(
        [_tail_rejection_scalar(shape, rate, lower, rng) for _ in range(n_draws)]
    )


def _mc_chain(data, prior, config, chain, pre, progress=None):
    rng_freq, rng_degree = chain_streams(config.seed, chain)
    n, u_count = data.n_respondents, data.n_unknown
    n_draws = config.kept_per_chain
    shape = data.x.sum(axis=1) + prior.c
    rate = pre.pi_sum + prior.d

    # Degrees first: independent truncated Gammas informed by the known
    # populations only, truncated at the per-respondent max known count.
    degree_rows = np.empty((n, n_draws))
    for i in range(n):
        degree_rows[i] = _mc_degree_column(
            float(shape[i]), float(rate[i]), float(pre.max_known[i]), n_draws, rng_degree
        )

    out = np.empty((n_draws, u_count + n))
    out[:, u_count:] = degree_rows.T
    degree_sums = degree_rows.sum(axis=0)

    # Frequencies conditional on each degree draw.  The Beta's second
    # parameter sums (delta_i - y_iu) over respondents; because the degree
    # truncation ignores the unknown-population counts, a draw can fall
    # below y_iu.  Those contributions clamp to zero and are counted.
    clamped = 0
    for u in range(u_count):
        yu = data.y[:, u].astype(np.float64)
        # Only rows whose unknown count exceeds every known count can clamp:
        # each degree draw already exceeds max_known.
        can_clamp = np.nonzero(yu > pre.max_known)[0]
        alpha = float(pre.sum_y[u] + prior.a[u])
        for start in range(0, n_draws, _MC_CHUNK):
            sl = slice(start, min(start + _MC_CHUNK, n_draws))
            beta = degree_sums[sl] - pre.sum_y[u] + prior.b[u]
            if can_clamp.size:
                gap = yu[can_clamp, None] - degree_rows[can_clamp, sl]
                positive = gap > 0
                if positive.any():
                    clamped += int(positive.sum())
                    beta = beta + np.where(positive, gap, 0.0).sum(axis=0)
            out[sl, u] = rng_freq.beta(alpha, beta)
    if progress is not None:
        progress({"engine": "mc", "chain": chain, "iteration": n_draws,
                  "total": n_draws})
    return out, clamped


# ---------------------------------------------------------------------------
# Drivers

_CHAIN_RUNNERS = {
    "gibbs": _gibbs_chain,
    "mh": _mh_chain,
    "mc": _mc_chain,
}


def _run_one_chain(args):
    engine, data, prior, config, chain = args
    pre = _Precomp.build(data)
    return _CHAIN_RUNNERS[engine](data, prior, config, chain, pre)


def _run_engine(engine, data, prior, config, progress):
    prior.matches(data)
    config = replace(config, engine=engine)
    started = time.perf_counter()

    results = []
    if config.parallel > 1 and config.chains > 1:
        jobs = [(engine, data, prior, config, c) for c in range(config.chains)]
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=min(config.parallel, config.chains)
        ) as pool:
            results = list(pool.map(_run_one_chain, jobs))
        if progress is not None:
            for c in range(config.chains):
                progress({"engine": engine, "chain": c,
                          "iteration": config.iterations,
                          "total": config.iterations})
    else:
        pre = _Precomp.build(data)
        runner = _CHAIN_RUNNERS[engine]
        for c in range(config.chains):
            results.append(runner(data, prior, config, c, pre, progress))

    kept = config.kept_per_chain
    n_param = data.n_unknown + data.n_respondents
    draws = np.empty((config.chains, kept, n_param))
    acceptance = None
    clamped = 0
    for c, res in enumerate(results):
        if engine == "mh":
            draws[c], rates = res
            acceptance = rates if acceptance is None else acceptance + rates
        elif engine == "mc":
            draws[c], chain_clamped = res
            clamped += int(chain_clamped)
        else:
            draws[c] = res
    if acceptance is not None:
        acceptance = acceptance / config.chains

    wall = time.perf_counter() - started
    return DrawMatrix(
        draws=draws,
        parameters=_parameter_names(data),
        n_unknown=data.n_unknown,
        engine=engine,
        seed=int(config.seed),
        iterations=config.iterations,
        burn_in=config.burn_in,
        thin=config.thin,
        wall_seconds=wall,
        config_hash=config.hash(),
        acceptance_rates=acceptance,
        clamped_contributions=clamped,
    )


def run_gibbs(data: SurveyData, prior: PriorSpec, config: RunConfig,
              progress: ProgressCallback | None = None) -> DrawMatrix:
    """Gibbs sampler: conjugate frequency updates alternating with
    truncated-Gamma degree updates (Poisson-approximated conditional)."""
    return _run_engine("gibbs", data, prior, config, progress)


def run_mh(data: SurveyData, prior: PriorSpec, config: RunConfig,
           progress: ProgressCallback | None = None) -> DrawMatrix:
    """Metropolis-within-Gibbs baseline targeting the exact
    continuous-binomial posterior; per-respondent step sizes adapt during
    burn-in toward ``mh_target_acceptance`` and freeze afterward."""
    return _run_engine("mh", data, prior, config, progress)


def run_mc(data: SurveyData, prior: PriorSpec, config: RunConfig,
           progress: ProgressCallback | None = None) -> DrawMatrix:
    """Non-iterative Monte Carlo sampler.

    Produces ``chains * (iterations - burn_in) // thin`` independent draws,
    matching the MCMC engines' stored output draw-for-draw; no burn-in or
    thinning is applied internally because draws are i.i.d.
    """
    return _run_engine("mc", data, prior, config, progress)


def run(data: SurveyData, prior: PriorSpec, config: RunConfig,
        progress: ProgressCallback | None = None) -> DrawMatrix:
    """Dispatch to the engine named in ``config.engine``."""
    return _run_engine(config.engine, data, prior, config, progress)
