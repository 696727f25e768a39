import math

import numpy as np
import pytest

from proxycal import (
    SimConfig,
    build_history,
    cov_components,
    density_ratio,
    estimate_all,
    exact_prevalence,
    gen_domain,
    mc_truth,
    outcome_prob,
    proxy_score,
    run_experiment,
    sample_unit_ball,
    threshold_count,
)
from proxycal.simulation import DomainData, _replicate_domains
from proxycal._rng import substream

from reference import enumerated_prevalence, enumerated_prevalence_sd

CFG = SimConfig(n_domains=5, n_per_domain=100, seed=0)


class TestSampleUnitBall:
    def test_inside_ball_always(self):
        rng = substream(1, 0)
        for _ in range(2000):
            assert np.linalg.norm(sample_unit_ball(4, rng)) <= 1.0

    def test_centered(self):
        rng = substream(2, 0)
        draws = np.array([sample_unit_ball(4, rng) for _ in range(100_000)])
        assert np.all(np.abs(draws.mean(axis=0)) < 0.02)

    def test_radius_distribution(self):
        # P(||mu|| <= r) = r^p for the uniform ball
        rng = substream(3, 0)
        norms = np.array([np.linalg.norm(sample_unit_ball(4, rng)) for _ in range(100_000)])
        assert np.mean(norms <= 0.5) == pytest.approx(0.5 ** 4, abs=0.01)

    def test_bad_dimension(self):
        with pytest.raises(ValueError):
            sample_unit_ball(0, substream(0, 0))


class TestThresholdCount:
    def test_all_above(self):
        assert threshold_count((1.0, 1.0, 1.0, 1.0), 0.0, 4) == 2.0

    def test_symmetric(self):
        assert threshold_count((-1.0, -1.0, 1.0, 1.0), 0.0, 4) == 0.0

    def test_hand_count(self):
        assert threshold_count((0.1, 0.2, 0.3, 0.4), 0.25, 4) == 0.0

    def test_batched(self):
        out = threshold_count(np.array([[1.0] * 4, [-1.0] * 4]), 0.0, 4)
        assert out.tolist() == [2.0, -2.0]

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            threshold_count((1.0, 2.0), 0.0, 4)


class TestOutcomeProb:
    @pytest.mark.parametrize(
        "x,expected",
        [
            ((0.1, 0.1, -0.1, -0.1), 0.119203),  # T = 0
            ((1.0, 1.0, 1.0, 1.0), 0.268941),    # T = 2
            ((-1.0,) * 4, 0.047426),             # T = -2
        ],
    )
    def test_hand_logistic(self, x, expected):
        assert outcome_prob(x, 0.0, CFG) == pytest.approx(expected, abs=1e-6)

    def test_strictly_interior(self):
        rng = substream(4, 0)
        x = rng.standard_normal((1000, 4))
        p = outcome_prob(x, 0.0, CFG)
        assert np.all((p > 0) & (p < 1))


class TestProxyScore:
    def test_arctan_zero(self):
        # lambda2*T + phi2 = 0 at T = -4 for the default parameters
        cfg = SimConfig(n_domains=2, n_per_domain=10, dim_p=8,
                        mu_target=(0.0,) * 8)
        assert proxy_score((-1.0,) * 8, cfg) == pytest.approx(0.5, abs=1e-12)

    def test_arctan_one(self):
        assert proxy_score((-1.0,) * 4, CFG) == pytest.approx(0.75, abs=1e-12)

    def test_hand_value(self):
        assert proxy_score((0.1, 0.1, -0.1, -0.1), CFG) == pytest.approx(0.852416, abs=1e-6)

    def test_interior(self):
        rng = substream(5, 0)
        x = rng.standard_normal((1000, 4))
        s = proxy_score(x, CFG)
        assert np.all((s > 0) & (s < 1))


class TestDensityRatio:
    def test_identical_means_unit(self):
        rng = substream(6, 0)
        x = rng.standard_normal((50, 4))
        mu = np.array([0.3, -0.2, 0.1, 0.0])
        assert np.allclose(density_ratio(x, mu, mu), 1.0)

    def test_hand_value(self):
        x = np.zeros(4)
        mu_t = np.array([1.0, 0.0, 0.0, 0.0])
        assert density_ratio(x, np.zeros(4), mu_t) == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_at_target_mode(self):
        mu_s = np.array([0.4, 0.4, 0.0, 0.0])
        mu_t = np.array([-0.3, 0.2, 0.1, 0.0])
        val = density_ratio(mu_t, mu_s, mu_t)
        assert val == pytest.approx(math.exp(0.5 * np.sum((mu_t - mu_s) ** 2)), rel=1e-12)
        assert val >= 1.0


class TestGenDomain:
    def test_primary_mean_near_truth(self):
        cfg = SimConfig(n_domains=2, n_per_domain=50_000, mu_target=(0.0,) * 4, seed=1)
        dom = gen_domain(cfg, np.zeros(4), 0.0, substream(7, 0))
        truth = enumerated_prevalence((0.0,) * 4)
        se = math.sqrt(truth * (1 - truth) / cfg.n_per_domain)
        assert dom.primary.mean() == pytest.approx(truth, abs=3 * se)
        assert truth == pytest.approx(0.129045, abs=1e-6)

    def test_proxy_in_open_interval(self):
        dom = gen_domain(CFG, np.zeros(4), 0.0, substream(8, 0))
        assert np.all((dom.proxy > 0) & (dom.proxy < 1))
        assert set(np.unique(dom.primary)) <= {0, 1}

    def test_covariate_mean_close(self):
        cfg = SimConfig(n_domains=2, n_per_domain=20_000, seed=1)
        mu = np.array([0.5, -0.5, 0.25, 0.0])
        dom = gen_domain(cfg, mu, 0.0, substream(9, 0))
        bound = 3.0 / math.sqrt(cfg.n_per_domain)
        assert np.all(np.abs(dom.covariates.mean(axis=0) - mu) < bound)


class TestCovComponents:
    def test_constant_series_zero(self):
        dom = DomainData(np.zeros((4, 4)), np.ones(4, dtype=np.int8),
                         np.full(4, 0.5), np.zeros(4), 0.0)
        assert np.allclose(cov_components(dom), 0.0)

    def test_hand_two_point(self):
        dom = DomainData(np.zeros((2, 4)), np.array([0, 1], dtype=np.int8),
                         np.array([0.2, 0.8]), np.zeros(4), 0.0)
        cov = cov_components(dom)
        assert cov == pytest.approx(np.array([[0.25, 0.15], [0.15, 0.09]]), rel=1e-12)

    def test_psd_fuzz(self):
        rng = substream(10, 0)
        for _ in range(50):
            n = int(rng.integers(2, 40))
            dom = DomainData(
                np.zeros((n, 4)),
                (rng.random(n) < 0.3).astype(np.int8),
                rng.random(n) * 0.98 + 0.01,
                np.zeros(4),
                0.0,
            )
            cov = cov_components(dom)
            assert cov[0, 1] == cov[1, 0]
            assert cov[0, 1] ** 2 <= cov[0, 0] * cov[1, 1] + 1e-12

    def test_requires_two_units(self):
        dom = DomainData(np.zeros((1, 4)), np.ones(1, dtype=np.int8),
                         np.full(1, 0.5), np.zeros(4), 0.0)
        with pytest.raises(ValueError):
            cov_components(dom)


def make_domain(y, ystar, mean, n_p=4):
    y = np.asarray(y, dtype=np.int8)
    ystar = np.asarray(ystar, dtype=float)
    return DomainData(np.zeros((len(y), n_p)), y, ystar, np.asarray(mean, dtype=float), 0.0)


class TestEstimateAll:
    def test_zero_residuals_collapse_to_proxy(self):
        rng = substream(11, 0)
        cfg = SimConfig(n_domains=3, n_per_domain=50, seed=0)
        doms = []
        for k in range(3):
            y = (rng.random(50) < 0.5).astype(np.int8)
            doms.append(make_domain(y, y.astype(float), rng.standard_normal(4)))
        est = estimate_all(doms, cfg)
        assert est["ppi"][0] == pytest.approx(est["proxy_only"][0], abs=1e-12)
        assert est["ppi_weighted"][0] == pytest.approx(est["proxy_only"][0], abs=1e-12)

    def test_equal_weights_make_weighted_match_plain(self):
        rng = substream(12, 0)
        cfg = SimConfig(n_domains=3, n_per_domain=80, seed=0)
        mu = np.array([0.2, -0.1, 0.0, 0.4])
        doms = []
        for k in range(3):
            x = rng.standard_normal((80, 4)) + mu
            y = (rng.random(80) < 0.3).astype(np.int8)
            doms.append(DomainData(x, y, rng.random(80), mu.copy(), 0.0))
        est = estimate_all(doms, cfg)
        assert est["ppi_weighted"][0] == pytest.approx(est["ppi"][0], rel=1e-12)

    def test_two_point_hand_arithmetic(self):
        cfg = SimConfig(n_domains=2, n_per_domain=2, seed=0)
        source = make_domain([1, 0], [0.8, 0.2], np.zeros(4))
        target = make_domain([0, 1], [0.5, 0.5], np.zeros(4))
        est = estimate_all([source, target], cfg)
        # residuals (0.2, -0.2): rectifier 0, S_DD = 0.08, var term 0.08/2
        assert est["ppi"][0] == pytest.approx(0.5, abs=1e-15)
        assert est["ppi"][1] == pytest.approx(0.0 + 0.04, rel=1e-12)
        assert est["proxy_only"] == (0.5, 0.0)

    def test_requires_two_domains(self):
        cfg = SimConfig(n_domains=2, n_per_domain=2, seed=0)
        with pytest.raises(ValueError):
            estimate_all([make_domain([0, 1], [0.5, 0.5], np.zeros(4))], cfg)

    def test_variances_nonnegative_fuzz(self):
        for rep in range(5):
            cfg = SimConfig(n_domains=4, n_per_domain=150, kappa=1.5, seed=40 + rep)
            est = estimate_all(_replicate_domains(cfg, 0), cfg)
            assert all(var >= 0.0 for _, var in est.values())


class TestBuildHistory:
    def test_shapes_and_validity(self):
        cfg = SimConfig(n_domains=6, n_per_domain=120, kappa=0.8, seed=3)
        domains = _replicate_domains(cfg, 0)
        for estimator in ("primary_only", "proxy_only", "ppi", "ppi_weighted"):
            records = build_history(domains, cfg, estimator)
            assert len(records) == cfg.n_domains - 1
            # record construction re-validates the covariance constraints

    def test_primary_only_history_is_degenerate_self_proxy(self):
        cfg = SimConfig(n_domains=4, n_per_domain=60, seed=4)
        domains = _replicate_domains(cfg, 0)
        for r in build_history(domains, cfg, "primary_only"):
            assert r.theta_star_hat == r.theta_hat
            d, dv = r.theta_star_hat - r.theta_hat, r.var_primary + r.var_proxy - 2 * r.cov_primary_proxy
            assert d == 0.0 and dv == 0.0

    def test_proxy_methods_never_read_target_primary(self):
        cfg = SimConfig(n_domains=4, n_per_domain=60, seed=5)
        domains = _replicate_domains(cfg, 0)
        poisoned = [DomainData(d.covariates, d.primary.copy(), d.proxy, d.mean, d.threshold)
                    for d in domains]
        poisoned[-1].primary = 1 - poisoned[-1].primary
        base = estimate_all(domains, cfg)
        pois = estimate_all(poisoned, cfg)
        for name in ("proxy_only", "ppi", "ppi_weighted"):
            assert base[name] == pois[name]
        assert base["primary_only"] != pois["primary_only"]
        for estimator in ("proxy_only", "ppi", "ppi_weighted"):
            a = build_history(domains, cfg, estimator)
            b = build_history(poisoned, cfg, estimator)
            assert a == b

    def test_rectifier_excludes_own_domain(self):
        # poisoning domain k's labels must not move its own record's proxy side
        cfg = SimConfig(n_domains=4, n_per_domain=60, seed=6)
        domains = _replicate_domains(cfg, 0)
        poisoned = [DomainData(d.covariates, d.primary.copy(), d.proxy, d.mean, d.threshold)
                    for d in domains]
        poisoned[0].primary = 1 - poisoned[0].primary
        for estimator in ("ppi", "ppi_weighted"):
            a = build_history(domains, cfg, estimator)[0]
            b = build_history(poisoned, cfg, estimator)[0]
            rect_a = a.theta_star_hat - domains[0].proxy.mean()
            rect_b = b.theta_star_hat - domains[0].proxy.mean()
            assert rect_a == pytest.approx(rect_b, abs=1e-15)


class TestTruth:
    def test_exact_prevalence_matches_reference_enumeration(self):
        for mu in ((0.0, 0.0, 0.0, 0.0), (0.5, -0.5, 0.5, -0.5), (0.2, 0.1, -0.3, 0.9)):
            cfg = SimConfig(n_domains=2, n_per_domain=10, mu_target=mu, seed=0)
            assert exact_prevalence(cfg) == pytest.approx(enumerated_prevalence(mu), rel=1e-12)

    def test_mc_truth_converges_to_enumeration(self):
        cfg = SimConfig(n_domains=2, n_per_domain=10, mu_target=(0.0,) * 4,
                        mc_truth_samples=200_000, seed=0)
        approx = mc_truth(cfg, substream(13, 0))
        exact = enumerated_prevalence((0.0,) * 4)
        se = enumerated_prevalence_sd((0.0,) * 4) / math.sqrt(cfg.mc_truth_samples)
        assert approx == pytest.approx(exact, abs=4 * se)

    def test_mc_truth_bit_reproducible(self):
        cfg = SimConfig(n_domains=2, n_per_domain=10, mc_truth_samples=50_000, seed=0)
        assert mc_truth(cfg, substream(14, 0)) == mc_truth(cfg, substream(14, 0))

    def test_saturating_mean_limit(self):
        # all coordinates far above threshold: count saturates at T = p/2
        cfg = SimConfig(n_domains=2, n_per_domain=10, mu_target=(10.0,) * 4,
                        mc_truth_samples=20_000, seed=0)
        val = mc_truth(cfg, substream(15, 0))
        assert val == pytest.approx(0.268941, abs=1e-4)


class TestRunExperiment:
    def test_result_shape(self):
        cfg = SimConfig(n_domains=5, n_per_domain=100, replicates=10, seed=2)
        cells = run_experiment(cfg)
        assert len(cells) == 4 * 3
        keys = {(c.estimator, c.adjustment) for c in cells}
        assert len(keys) == 12
        for c in cells:
            assert 0.0 <= c.coverage <= 1.0
            assert c.mean_length >= 0.0
            assert c.replicates == 10

    def test_bit_reproducible_across_runs_and_workers(self):
        base = SimConfig(n_domains=5, n_per_domain=100, replicates=6, seed=9)
        a = run_experiment(base)
        b = run_experiment(base)
        c = run_experiment(SimConfig(n_domains=5, n_per_domain=100, replicates=6, seed=9,
                                     workers=3))
        assert a == b == c

    def test_estimator_subset_matches_full_run(self):
        full = run_experiment(SimConfig(n_domains=5, n_per_domain=100, replicates=5, seed=12))
        sub = run_experiment(SimConfig(n_domains=5, n_per_domain=100, replicates=5, seed=12,
                                       estimators=("proxy_only",), adjustments=("bootstrap",)))
        wanted = next(c for c in full if (c.estimator, c.adjustment) == ("proxy_only", "bootstrap"))
        assert sub == [wanted]

    def test_primary_only_wald_sanity_coverage(self):
        cfg = SimConfig(n_domains=5, n_per_domain=5000, replicates=500, seed=100,
                        estimators=("primary_only",), adjustments=("none",))
        cell = run_experiment(cfg)[0]
        assert cell.coverage == pytest.approx(0.95, abs=0.03)


class TestSimConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n_domains=1, n_per_domain=10),
            dict(n_domains=5, n_per_domain=0),
            dict(n_domains=5, n_per_domain=10, kappa=-1.0),
            dict(n_domains=5, n_per_domain=10, alpha=1.0),
            dict(n_domains=5, n_per_domain=10, mu_target=(0.0,)),
            dict(n_domains=5, n_per_domain=10, estimators=("nope",)),
            dict(n_domains=5, n_per_domain=10, adjustments=("nope",)),
            dict(n_domains=5, n_per_domain=10, workers=0),
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)
