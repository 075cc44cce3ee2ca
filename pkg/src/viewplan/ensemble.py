"""Ensemble of GP surrogates: Bayes-rule weights, Gaussian-mixture posterior,
and categorical model selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from viewplan.gp import GpModel, log_marginal_likelihood, predict_batch
from viewplan.seeds import derive_seed


def _check_weights(w: np.ndarray):
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be a probability vector")


@dataclass(frozen=True)
class Ensemble:
    models: tuple[GpModel, ...]
    weights: np.ndarray
    prior_weights: np.ndarray

    def __post_init__(self):
        m = len(self.models)
        if m < 1:
            raise ValueError("ensemble needs at least one model")
        w = np.asarray(self.weights, dtype=float).reshape(m)
        w0 = np.asarray(self.prior_weights, dtype=float).reshape(m)
        _check_weights(w)
        _check_weights(w0)
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "prior_weights", w0)


def uniform_ensemble(models) -> Ensemble:
    m = len(models)
    w = np.full(m, 1.0 / m)
    return Ensemble(models=tuple(models), weights=w.copy(), prior_weights=w.copy())


def weights_from_log_marginals(log_marginals, prior_weights) -> np.ndarray:
    """Softmax of (log marginal likelihood + log prior), max-stabilized.

    A zero prior weight pins that model's posterior weight to zero
    regardless of its likelihood.
    """
    lm = np.asarray(log_marginals, dtype=float).reshape(-1)
    w0 = np.asarray(prior_weights, dtype=float).reshape(lm.shape)
    _check_weights(w0)
    with np.errstate(divide="ignore"):
        logw = np.where(w0 > 0, lm + np.log(np.where(w0 > 0, w0, 1.0)), -np.inf)
    peak = logw.max()
    if not np.isfinite(peak):
        raise ValueError("all models have zero posterior mass")
    w = np.exp(logw - peak)
    return w / w.sum()


def update_weights(models, prior_weights) -> np.ndarray:
    """Posterior model weights via Bayes' rule over the models' marginal
    likelihoods. Models must all be fitted on the same dataset."""
    lm = np.array([log_marginal_likelihood(m) for m in models])
    return weights_from_log_marginals(lm, prior_weights)


@dataclass(frozen=True)
class MixturePrediction:
    """Per-model posterior (mean, variance) triples with their weights."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.weights @ self.means)

    @property
    def variance(self) -> float:
        second = float(self.weights @ (self.variances + self.means**2))
        return second - self.mean**2


def ensemble_posterior(ensemble: Ensemble, z) -> MixturePrediction:
    z = np.asarray(z, dtype=float).reshape(1, -1)
    mus = np.empty(len(ensemble.models))
    vars_ = np.empty(len(ensemble.models))
    for i, m in enumerate(ensemble.models):
        mu, var = predict_batch(m, z)
        mus[i] = mu[0]
        vars_[i] = var[0]
    return MixturePrediction(means=mus, variances=vars_, weights=ensemble.weights.copy())


def sample_model(weights, seed: int = 0) -> int:
    """Draw a model index from the categorical weight distribution."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    _check_weights(w)
    rng = np.random.default_rng(derive_seed(seed, 9))
    return int(rng.choice(w.size, p=w))
