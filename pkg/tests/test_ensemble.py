import numpy as np
import pytest

from viewplan.ensemble import (
    Ensemble,
    MixturePrediction,
    ensemble_posterior,
    sample_model,
    uniform_ensemble,
    update_weights,
    weights_from_log_marginals,
)
from viewplan.gp import MATERN_25, RBF_ARD, GpModel, KernelSpec, fit_posterior, log_marginal_likelihood


def make_models(rng, t=10, d=2, families=(RBF_ARD, MATERN_25)):
    Z = rng.normal(size=(t, d))
    y = rng.normal(size=t)
    return [
        fit_posterior(
            GpModel(kernel=KernelSpec(f, rng.uniform(0.5, 2.0), rng.uniform(0.4, 1.5)),
                    noise_variance=1e-3),
            Z, y,
        )
        for f in families
    ]


class TestWeights:
    def test_matches_high_precision_bayes_oracle(self):
        import mpmath

        mpmath.mp.dps = 50
        rng = np.random.default_rng(0)
        for _ in range(10):
            models = make_models(rng)
            w0 = rng.dirichlet([1.0, 1.0])
            w = update_weights(models, w0)
            lm = [log_marginal_likelihood(m) for m in models]
            unnorm = [mpmath.e**mpmath.mpf(l) * mpmath.mpf(p) for l, p in zip(lm, w0)]
            total = sum(unnorm)
            expected = np.array([float(u / total) for u in unnorm])
            np.testing.assert_allclose(w, expected, atol=1e-10)

    def test_symmetric_models_get_uniform_weights(self):
        rng = np.random.default_rng(1)
        Z = rng.normal(size=(10, 2))
        y = rng.normal(size=10)
        spec = KernelSpec(RBF_ARD, 1.0, [0.8, 0.8])
        models = [fit_posterior(GpModel(kernel=spec, noise_variance=1e-3), Z, y)
                  for _ in range(3)]
        w = update_weights(models, np.full(3, 1 / 3))
        np.testing.assert_allclose(w, 1 / 3, atol=1e-12)

    def test_log_shift_invariance(self):
        lm = np.array([-3.0, -1.0, -7.0])
        w0 = np.array([0.2, 0.5, 0.3])
        base = weights_from_log_marginals(lm, w0)
        for shift in (-500.0, 500.0, 1234.5):
            np.testing.assert_allclose(
                weights_from_log_marginals(lm + shift, w0), base, atol=1e-12
            )

    def test_extreme_log_marginals_no_overflow(self):
        w = weights_from_log_marginals([-1e6, -1e6 + 1.0], [0.5, 0.5])
        assert np.all(np.isfinite(w))
        assert w.sum() == pytest.approx(1.0)
        assert w[1] > w[0]

    def test_zero_prior_pins_weight(self):
        w = weights_from_log_marginals([100.0, -5.0], [0.0, 1.0])
        np.testing.assert_allclose(w, [0.0, 1.0])

    def test_all_zero_mass_rejected(self):
        with pytest.raises(ValueError):
            weights_from_log_marginals([-np.inf, -np.inf], [0.5, 0.5])

    def test_invalid_prior(self):
        with pytest.raises(ValueError):
            weights_from_log_marginals([0.0, 0.0], [0.7, 0.7])


class TestMixture:
    def test_moments_match_monte_carlo(self):
        rng = np.random.default_rng(2)
        mus = np.array([-1.0, 0.5, 2.0])
        vars_ = np.array([0.5, 1.5, 0.2])
        w = np.array([0.2, 0.5, 0.3])
        pred = MixturePrediction(means=mus, variances=vars_, weights=w)
        n = 10**6
        comps = rng.choice(3, size=n, p=w)
        draws = rng.normal(mus[comps], np.sqrt(vars_[comps]))
        se_mean = draws.std() / np.sqrt(n)
        assert abs(pred.mean - draws.mean()) < 3 * se_mean
        # variance of the sample variance ~ (m4 - var^2)/n
        m4 = np.mean((draws - draws.mean()) ** 4)
        se_var = np.sqrt((m4 - draws.var() ** 2) / n)
        assert abs(pred.variance - draws.var()) < 3 * se_var

    def test_single_component(self):
        pred = MixturePrediction(means=np.array([1.5]), variances=np.array([0.3]),
                                 weights=np.array([1.0]))
        assert pred.mean == 1.5
        assert pred.variance == pytest.approx(0.3)

    def test_between_model_disagreement_adds_variance(self):
        pred = MixturePrediction(means=np.array([-2.0, 2.0]), variances=np.array([0.1, 0.1]),
                                 weights=np.array([0.5, 0.5]))
        assert pred.variance == pytest.approx(0.1 + 4.0)

    def test_ensemble_posterior_combines_members(self):
        rng = np.random.default_rng(3)
        models = make_models(rng)
        ens = uniform_ensemble(models)
        z = rng.normal(size=2)
        pred = ensemble_posterior(ens, z)
        from viewplan.gp import predict

        for i, m in enumerate(models):
            mu, var = predict(m, z)
            assert pred.means[i] == pytest.approx(mu, rel=1e-12)
            assert pred.variances[i] == pytest.approx(var, rel=1e-12)
        assert pred.mean == pytest.approx(float(ens.weights @ pred.means))


class TestSampleModel:
    def test_degenerate_weights(self):
        for s in range(20):
            assert sample_model([0.0, 1.0, 0.0], seed=s) == 1

    def test_frequencies(self):
        w = np.array([0.1, 0.6, 0.3])
        counts = np.zeros(3)
        n = 10**5
        for s in range(n):
            counts[sample_model(w, seed=s)] += 1
        freq = counts / n
        # 5 sigma binomial bound per component
        for j in range(3):
            se = np.sqrt(w[j] * (1 - w[j]) / n)
            assert abs(freq[j] - w[j]) < 5 * se

    def test_determinism(self):
        w = [0.3, 0.3, 0.4]
        assert sample_model(w, seed=7) == sample_model(w, seed=7)

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            sample_model([0.5, 0.2], seed=0)


class TestEnsembleContainer:
    def test_uniform_construction(self):
        models = make_models(np.random.default_rng(4))
        ens = uniform_ensemble(models)
        np.testing.assert_allclose(ens.weights, 0.5)
        np.testing.assert_allclose(ens.prior_weights, 0.5)

    def test_invalid_weights_rejected(self):
        models = make_models(np.random.default_rng(5))
        with pytest.raises(ValueError):
            Ensemble(models=tuple(models), weights=np.array([0.9, 0.9]),
                     prior_weights=np.array([0.5, 0.5]))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Ensemble(models=(), weights=np.array([]), prior_weights=np.array([]))
