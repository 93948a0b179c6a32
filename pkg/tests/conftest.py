import numpy as np
import pytest

from netscaleup import PriorSpec, SurveyData, generate_synthetic


@pytest.fixture(scope="session")
def tiny_survey():
    """Hand-built 3-respondent survey: K=2 known, U=1 unknown."""
    return SurveyData(
        x=np.array([[2, 3], [0, 1], [5, 4]]),
        y=np.array([[1], [0], [2]]),
        known_sizes=np.array([50_000.0, 30_000.0]),
        total_population=1_000_000.0,
    )


@pytest.fixture(scope="session")
def small_survey():
    """Quick synthetic instance for fast engine tests (n=60)."""
    data, truth = generate_synthetic(
        n=60,
        n_known=4,
        n_unknown=2,
        true_theta=[0.01, 0.03],
        known_sizes=[40_000, 25_000, 15_000, 8_000],
        total_population=1_000_000,
        seed=2024,
    )
    return data, truth


@pytest.fixture(scope="session")
def survey500():
    """The reference benchmark-sized instance: n=500, K=20, U=4."""
    known_sizes = np.linspace(8_000, 36_000, 20).round()
    data, truth = generate_synthetic(
        n=500,
        n_known=20,
        n_unknown=4,
        true_theta=[0.005, 0.01, 0.02, 0.035],
        known_sizes=known_sizes,
        total_population=1_800_000,
        seed=77,
    )
    return data, truth


@pytest.fixture(scope="session")
def default_prior_small(small_survey):
    data, _ = small_survey
    return PriorSpec.default(data)


def batch_means_se(draws: np.ndarray, n_batches: int = 25) -> float:
    """Monte Carlo standard error of a mean via batch means.

    Independent of the package's ESS machinery so cross-engine agreement
    checks do not lean on the code they are checking.
    """
    draws = np.asarray(draws, dtype=np.float64).ravel()
    usable = (draws.size // n_batches) * n_batches
    batches = draws[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(batches.std(ddof=1) / np.sqrt(n_batches))


def rejection_oracle(shape, rate, lower, rng, size):
    """Naive accept-reject truncated-Gamma sampler used as the test oracle."""
    out = np.empty(int(size))
    filled = 0
    while filled < out.size:
        block = max(int((out.size - filled) * 2) + 64, 256)
        cand = rng.gamma(shape, 1.0 / rate, block)
        cand = cand[cand > lower]
        take = min(cand.size, out.size - filled)
        out[filled : filled + take] = cand[:take]
        filled += take
    return out
