"""Exact sampling from lower-truncated Gamma distributions.

The workhorse is the inverse-CDF construction on the truncated region:
with P the regularized lower incomplete gamma function, a draw is
``invP(shape, P(shape, rate * lower) + U * (1 - P(shape, rate * lower))) / rate``.
We evaluate it through the *upper* tail inverse ``gammainccinv`` so the
argument ``(1 - P) * (1 - U)`` never suffers cancellation near 1.  When the
truncated region holds less than ``TAIL_EPS`` of the mass even that is
ill-conditioned, and a shifted-exponential rejection sampler takes over.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammainc, gammainccinv

from ..model import TruncGammaParams, ValidationError

# Below this much remaining mass the inverse CDF loses precision; switch to
# the tail rejection sampler.
TAIL_EPS = 1e-12

# Smallest argument fed to gammainccinv; guards a (measure-zero) underflow
# of tail * (1 - u) to exactly 0, which would map to +inf.
_Q_FLOOR = 1e-300


def _tail_rejection_scalar(shape: float, rate: float, lower: float, rng) -> float:
    """Draw from the extreme upper tail by rejection from a shifted exponential.

    The proposal rate matches the target's log-density slope at the bound
    (``rate - (shape - 1) / lower`` for shape > 1), which makes the envelope
    tight exactly in the deep-tail regime where this is called.
    """
    if shape > 1.0:
        lam = rate - (shape - 1.0) / lower
    else:
        lam = rate
    # Deep tail implies rate * lower >> shape, so lam > 0 holds; fail loudly
    # rather than sample from a broken envelope if that is ever violated.
    if not lam > 0.0:
        raise ValidationError(
            f"tail sampler requires lower > (shape - 1) / rate; got "
            f"shape={shape}, rate={rate}, lower={lower}"
        )
    excess = rate - lam
    while True:
        x = lower + rng.exponential(1.0 / lam)
        log_accept = (shape - 1.0) * np.log(x / lower) - excess * (x - lower)
        if np.log(rng.uniform()) < log_accept:
            return x


def trunc_gamma_draws(shape, rate, lower, rng, size=None) -> np.ndarray:
    """Vectorized truncated-Gamma draws; parameters broadcast against ``size``.

    Every returned value exceeds its ``lower`` bound.  Scalar parameters
    with ``size=None`` still return a 0-d array; use ``sample_trunc_gamma``
    for the scalar API.
    """
    shape = np.asarray(shape, dtype=np.float64)
    rate = np.asarray(rate, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ValidationError("shape and rate must be strictly positive")
    if np.any(lower < 0):
        raise ValidationError("lower bounds must be nonnegative")

    if size is None:
        out_shape = np.broadcast(shape, rate, lower).shape
    else:
        out_shape = (int(size),) if np.isscalar(size) else tuple(size)

    p_low = gammainc(shape, rate * lower)
    tail = 1.0 - p_low
    u = rng.uniform(size=out_shape)
    q_upper = np.fmax(tail * (1.0 - u), _Q_FLOOR)
    x = gammainccinv(shape, q_upper) / rate

    degenerate = np.broadcast_to(tail < TAIL_EPS, out_shape)
    if np.any(degenerate):
        shape_b = np.broadcast_to(shape, out_shape)
        rate_b = np.broadcast_to(rate, out_shape)
        lower_b = np.broadcast_to(lower, out_shape)
        x = np.array(x, copy=True)
        for idx in np.argwhere(degenerate):
            key = tuple(idx)
            x[key] = _tail_rejection_scalar(
                float(shape_b[key]), float(rate_b[key]), float(lower_b[key]), rng
            )

    # Support is open at the bound; nudge the (measure-zero) rounding hits.
    lower_b = np.broadcast_to(lower, out_shape)
    at_bound = x <= lower_b
    if np.any(at_bound):
        x = np.where(at_bound, np.nextafter(lower_b, np.inf), x)
    return x


def sample_trunc_gamma(params: TruncGammaParams, rng, size=None):
    """Draw from Gamma(shape, rate) restricted to ``(lower, inf)``.

    Returns a float when ``size`` is None, otherwise an array of draws.
    """
    if not isinstance(params, TruncGammaParams):
        params = TruncGammaParams(*params)
    draws = trunc_gamma_draws(params.shape, params.rate, params.lower, rng, size=size)
    if size is None:
        return float(draws)
    return draws
