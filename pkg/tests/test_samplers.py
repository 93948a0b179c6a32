import numpy as np
import pytest
from scipy.stats import ks_2samp

from netscaleup import (
    PriorSpec,
    RunConfig,
    SurveyData,
    ValidationError,
    initialize_state,
    log_likelihood,
    run,
    run_gibbs,
    run_mc,
    run_mh,
    summarize,
    theta_full_conditional,
    delta_full_conditional,
)
from netscaleup.model import LatentState, row_maxima
from netscaleup.samplers.engines import _Precomp, _mh_g_terms

from conftest import batch_means_se


@pytest.fixture(scope="module")
def gibbs500(survey500):
    data, _ = survey500
    prior = PriorSpec.default(data)
    config = RunConfig(engine="gibbs", chains=2, iterations=3000, burn_in=600,
                       thin=4, seed=314)
    return run_gibbs(data, prior, config)


@pytest.fixture(scope="module")
def mh500(survey500):
    data, _ = survey500
    prior = PriorSpec.default(data)
    config = RunConfig(engine="mh", chains=2, iterations=3000, burn_in=1500,
                       thin=2, seed=314)
    return run_mh(data, prior, config)


@pytest.fixture(scope="module")
def mc500(survey500):
    data, _ = survey500
    prior = PriorSpec.default(data)
    config = RunConfig(engine="mc", chains=2, iterations=3000, burn_in=600,
                       thin=4, seed=314)
    return run_mc(data, prior, config)


@pytest.fixture(scope="module")
def tiny_instance():
    """Small exact-regime instance: frequencies <= 0.01, degrees ~ 200."""
    rng = np.random.default_rng(55)
    sizes = np.array([9_000.0, 14_000.0])
    total = 2_000_000.0
    pi = sizes / total
    delta = np.rint(rng.gamma(8.0, 25.0, 3)).astype(int)
    data = SurveyData(
        x=rng.binomial(delta[:, None], pi[None, :]),
        y=rng.binomial(delta[:, None], [[0.006]] * 3),
        known_sizes=sizes,
        total_population=total,
    )
    prior = PriorSpec.default(data)
    return data, prior


class TestRunConfig:
    def test_validation(self):
        with pytest.raises(ValidationError):
            RunConfig(engine="nuts")
        with pytest.raises(ValidationError):
            RunConfig(burn_in=100, iterations=100)
        with pytest.raises(ValidationError):
            RunConfig(iterations=100, burn_in=50, thin=200)  # nothing kept
        assert RunConfig().kept_per_chain == 1000

    def test_floor_division_documented_behavior(self):
        config = RunConfig(iterations=105, burn_in=5, thin=10)
        assert config.kept_per_chain == 10  # remainder dropped

    def test_hash_ignores_parallelism_only(self):
        base = RunConfig(seed=7)
        assert base.hash() == RunConfig(seed=7, parallel=4).hash()
        assert base.hash() != RunConfig(seed=8).hash()


class TestInitializeState:
    def test_ratio_estimator(self):
        data = SurveyData(
            x=np.array([[2, 3]]), y=np.array([[0]]),
            known_sizes=np.array([50_000.0, 50_000.0]),
            total_population=1_000_000.0,
        )
        state = initialize_state(data, PriorSpec.default(data))
        np.testing.assert_allclose(state.delta, [50.0])

    def test_all_zero_row_floors_at_max_plus_one(self):
        data = SurveyData(
            x=np.array([[0, 0]]), y=np.array([[0]]),
            known_sizes=np.array([50_000.0, 50_000.0]),
            total_population=1_000_000.0,
        )
        state = initialize_state(data, PriorSpec.default(data))
        np.testing.assert_allclose(state.delta, [1.0])

    def test_within_order_of_magnitude_of_truth(self, survey500):
        data, truth = survey500
        state = initialize_state(data, PriorSpec.default(data))
        ratio = state.delta / np.maximum(truth.delta, 1e-9)
        ok = (ratio > 0.1) & (ratio < 10.0)
        assert ok.mean() >= 0.95


class TestEngineContracts:
    def test_gibbs_deterministic(self, small_survey):
        data, _ = small_survey
        prior = PriorSpec.default(data)
        config = RunConfig(chains=2, iterations=400, burn_in=100, thin=3, seed=99)
        a = run_gibbs(data, prior, config)
        b = run_gibbs(data, prior, config)
        np.testing.assert_array_equal(a.draws, b.draws)

    @pytest.mark.parametrize("engine", ["mh", "mc"])
    def test_other_engines_deterministic(self, small_survey, engine):
        data, _ = small_survey
        prior = PriorSpec.default(data)
        config = RunConfig(engine=engine, chains=2, iterations=400, burn_in=100,
                           thin=3, seed=99)
        a = run(data, prior, config)
        b = run(data, prior, config)
        np.testing.assert_array_equal(a.draws, b.draws)
        if engine == "mh":
            np.testing.assert_array_equal(a.acceptance_rates, b.acceptance_rates)

    def test_parallel_chains_match_sequential(self, small_survey):
        data, _ = small_survey
        prior = PriorSpec.default(data)
        seq = run_gibbs(data, prior,
                        RunConfig(chains=2, iterations=300, burn_in=50, thin=2,
                                  seed=5, parallel=1))
        par = run_gibbs(data, prior,
                        RunConfig(chains=2, iterations=300, burn_in=50, thin=2,
                                  seed=5, parallel=2))
        np.testing.assert_array_equal(seq.draws, par.draws)

    def test_gibbs_degree_draws_exceed_row_maxima(self, gibbs500, survey500):
        data, _ = survey500
        degrees = gibbs500.degree_draws()
        bound = row_maxima(data)
        assert np.all(degrees > bound[None, None, :])

    def test_mc_degree_draws_exceed_known_maxima(self, mc500, survey500):
        data, _ = survey500
        degrees = mc500.degree_draws()
        bound = data.x.max(axis=1)
        assert np.all(degrees > bound[None, None, :])

    def test_theta_draws_in_unit_interval(self, gibbs500, mh500, mc500):
        for dm in (gibbs500, mh500, mc500):
            theta = dm.theta_draws()
            assert np.all((theta > 0) & (theta < 1))

    def test_progress_callback_invoked(self, small_survey):
        data, _ = small_survey
        prior = PriorSpec.default(data)
        events = []
        run_gibbs(data, prior,
                  RunConfig(chains=1, iterations=2000, burn_in=100, thin=10, seed=1),
                  progress=events.append)
        assert events and events[-1]["iteration"] == 2000

    def test_engine_formulas_match_full_conditional_ops(self, small_survey):
        # The engines vectorize the full conditionals; they must agree with
        # the reference per-index computations exactly.
        data, _ = small_survey
        prior = PriorSpec.default(data)
        pre = _Precomp.build(data)
        rng = np.random.default_rng(12)
        delta = row_maxima(data) + rng.uniform(1, 200, data.n_respondents)
        theta = rng.uniform(0.001, 0.05, data.n_unknown)

        alpha_vec = pre.sum_y + prior.a
        beta_vec = delta.sum() - pre.sum_y + prior.b
        for u in range(data.n_unknown):
            ref = theta_full_conditional(data, delta, u, prior)
            np.testing.assert_allclose([alpha_vec[u], beta_vec[u]],
                                       [ref.alpha, ref.beta], rtol=1e-13)

        shape_vec = pre.count_rows + prior.c
        rate_vec = theta.sum() + pre.pi_sum + prior.d
        for i in range(data.n_respondents):
            ref = delta_full_conditional(data, theta, i, prior)
            np.testing.assert_allclose(
                [shape_vec[i], rate_vec[i], pre.max_all[i]],
                [ref.shape, ref.rate, ref.lower], rtol=1e-13,
            )

    def test_mh_internal_target_matches_log_likelihood(self, small_survey):
        # The MH engine caches the delta-dependent part of the target; its
        # difference between two states must equal the difference of the
        # full continuous-binomial log-likelihood plus the Gamma prior.
        data, _ = small_survey
        prior = PriorSpec.default(data)
        pre = _Precomp.build(data)
        rng = np.random.default_rng(21)
        n_cells = data.n_unknown + data.n_known
        theta = rng.uniform(0.001, 0.05, data.n_unknown)

        def target(delta):
            state = LatentState(theta=theta, delta=delta)
            prior_term = np.sum((prior.c - 1.0) * np.log(delta) - prior.d * delta)
            return log_likelihood(data, state, "continuous-binomial") + prior_term

        base = row_maxima(data) + rng.uniform(1, 150, data.n_respondents)
        other = row_maxima(data) + rng.uniform(1, 150, data.n_respondents)
        slope = np.log1p(-theta).sum() + np.log1p(-pre.pi).sum()
        g_base = _mh_g_terms(base, data.y, data.x, prior.c, prior.d, n_cells)
        g_other = _mh_g_terms(other, data.y, data.x, prior.c, prior.d, n_cells)
        internal_diff = (g_other - g_base).sum() + (other - base).sum() * slope
        np.testing.assert_allclose(internal_diff, target(other) - target(base),
                                   rtol=1e-9)


class TestGibbsCorrectness:
    def test_recovers_synthetic_truth(self, gibbs500, survey500):
        data, truth = survey500
        theta = gibbs500.theta_draws().reshape(-1, data.n_unknown)
        means = theta.mean(axis=0)
        sds = theta.std(axis=0)
        assert np.all(np.abs(means - truth.theta) < 4 * sds)

    def test_theta_agreement_with_mh_on_exact_regime(self, tiny_instance):
        data, prior = tiny_instance
        config = RunConfig(chains=2, iterations=24_000, burn_in=2_000, thin=2,
                           seed=17)
        gibbs = run_gibbs(data, prior, config)
        mh = run_mh(data, prior, config)
        g = gibbs.theta_draws().reshape(-1)
        m = mh.theta_draws().reshape(-1)
        se = np.hypot(batch_means_se(g), batch_means_se(m))
        assert abs(g.mean() - m.mean()) < 3 * se

    def test_degree_marginal_matches_exact_likelihood_mh(self, tiny_instance):
        # Long-run Gibbs degrees (Poisson-approximated conditional) against
        # the exact-likelihood MH baseline; the approximation gap in this
        # low-frequency regime must stay inside KS 0.02.
        data, prior = tiny_instance
        config = RunConfig(chains=2, iterations=24_000, burn_in=2_000, thin=2,
                           seed=29)
        gibbs = run_gibbs(data, prior, config)
        mh = run_mh(data, prior, config)
        for i in range(data.n_respondents):
            g = gibbs.degree_draws()[:, :, i].reshape(-1)
            m = mh.degree_draws()[:, :, i].reshape(-1)
            assert ks_2samp(g, m).statistic < 0.02


class TestMetropolisHastings:
    def test_acceptance_rates_near_target(self, mh500):
        rates = mh500.acceptance_rates
        assert rates is not None
        assert 0.2 < rates.mean() < 0.6

    def test_acceptance_reported_per_respondent(self, mh500, survey500):
        data, _ = survey500
        assert mh500.acceptance_rates.shape == (data.n_respondents,)


class TestMonteCarlo:
    def test_lag1_autocorrelation_negligible(self, survey500):
        data, _ = survey500
        prior = PriorSpec.default(data)
        config = RunConfig(engine="mc", chains=1, iterations=4000, burn_in=0,
                           thin=1, seed=3)
        dm = run_mc(data, prior, config)
        theta = dm.theta_draws()[0]
        for u in range(data.n_unknown):
            col = theta[:, u] - theta[:, u].mean()
            rho1 = np.dot(col[:-1], col[1:]) / np.dot(col, col)
            assert abs(rho1) < 0.05

    def test_agrees_with_gibbs_posterior_means(self, gibbs500, mc500, survey500):
        data, _ = survey500
        g = gibbs500.theta_draws().reshape(-1, data.n_unknown).mean(axis=0)
        m = mc500.theta_draws().reshape(-1, data.n_unknown).mean(axis=0)
        np.testing.assert_allclose(m, g, rtol=0.05)

    def test_draw_count_matches_mcmc_output(self, mc500, gibbs500):
        assert mc500.draws.shape[:2] == gibbs500.draws.shape[:2]

    def test_exchangeability_of_draws(self, mc500, survey500):
        data, _ = survey500
        perm = np.random.default_rng(0).permutation(mc500.kept_per_chain)
        shuffled = mc500.draws[:, perm, :]
        np.testing.assert_allclose(shuffled.mean(axis=(0, 1)),
                                   mc500.draws.mean(axis=(0, 1)))
        np.testing.assert_allclose(
            np.quantile(shuffled[:, :, 0], [0.1, 0.5, 0.9]),
            np.quantile(mc500.draws[:, :, 0], [0.1, 0.5, 0.9]),
        )

    def test_clamp_counter_on_adversarial_data(self):
        # Unknown counts far above every known count make sub-count degree
        # draws likely; the engine must clamp and count, not crash.
        data = SurveyData(
            x=np.array([[1, 0], [0, 1], [1, 1]]),
            y=np.array([[40], [35], [50]]),
            known_sizes=np.array([10_000.0, 15_000.0]),
            total_population=1_000_000.0,
        )
        prior = PriorSpec.default(data, c=1.5, d=0.05)
        config = RunConfig(engine="mc", chains=1, iterations=4000, burn_in=0,
                           thin=1, seed=8)
        dm = run_mc(data, prior, config)
        assert dm.clamped_contributions > 0
        assert np.all(dm.theta_draws() > 0)


class TestSizeTransform:
    def test_size_quantiles_are_exact_multiples(self, mc500, survey500):
        data, _ = survey500
        doc = summarize(mc500, data, level=0.9)
        pooled = mc500.theta_draws().reshape(-1, data.n_unknown)
        for u, pop in enumerate(doc.populations):
            lo = float(np.quantile(pooled[:, u], 0.05))
            hi = float(np.quantile(pooled[:, u], 0.95))
            assert pop.size_ci_low == data.total_population * lo
            assert pop.size_ci_high == data.total_population * hi
            assert pop.size_mean == data.total_population * pop.mean
