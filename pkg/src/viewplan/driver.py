"""The optimization loop: initial design, fit -> weight -> sample -> acquire ->
evaluate, with full trace recording."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from viewplan.acquisition import AcquisitionBudget, maximize_af
from viewplan.ensemble import sample_model, update_weights
from viewplan.geometry import SearchSpace, ViewPlan, decode_plan
from viewplan.gp import KERNEL_FAMILIES, RBF_ARD, GpModel, KernelSpec, fit_hyperparameters, fit_posterior
from viewplan.seeds import derive_seed


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    theta: np.ndarray
    y: float
    model_index: int | None
    weights: np.ndarray
    best_y: float
    runtime_ms: float


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.y for r in self.records])

    @property
    def best_y(self) -> np.ndarray:
        return np.array([r.best_y for r in self.records])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])


class OracleFailure(RuntimeError):
    """Oracle raised mid-run; the partial trace is preserved on .trace."""

    def __init__(self, message: str, trace: Trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class BoConfig:
    """Loop configuration. Budgets below the per-operation defaults keep the
    per-iteration refit cheap; they are exposed rather than hard-coded."""

    t_init: int = 50
    t: int = 100
    kernel_families: tuple[str, ...] = KERNEL_FAMILIES
    refit_every: int = 1
    fit_budget: int = 60
    fit_starts: int = 2
    acquisition: AcquisitionBudget = AcquisitionBudget(
        n_random_candidates=1024, n_refine_starts=4, refine_steps=40
    )
    prior_weights: tuple[float, ...] | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.t_init < 2:
            raise ValueError("t_init must be >= 2")
        if self.t < 0:
            raise ValueError("t must be >= 0")
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")
        for fam in self.kernel_families:
            if fam not in KERNEL_FAMILIES:
                raise ValueError(f"unknown kernel family {fam!r}")


def init_design(space: SearchSpace, t_init: int, seed: int = 0) -> np.ndarray:
    """Latin-hypercube sample: one point per 1/t_init stratum in every dim."""
    if t_init < 1:
        raise ValueError("t_init must be >= 1")
    rng = np.random.default_rng(derive_seed(seed, 12))
    d = space.dimension
    u = np.empty((t_init, d))
    for j in range(d):
        strata = rng.permutation(t_init)
        u[:, j] = (strata + rng.random(t_init)) / t_init
    return space.lower + u * (space.upper - space.lower)


def _initial_specs(families, space: SearchSpace) -> list[KernelSpec]:
    span = space.upper - space.lower
    specs = []
    for fam in families:
        if fam == RBF_ARD:
            specs.append(KernelSpec(fam, 1.0, 0.25 * span))
        else:
            specs.append(KernelSpec(fam, 1.0, 0.25 * float(np.mean(span))))
    return specs


def run_ensemble_bo(oracle, space: SearchSpace, config: BoConfig) -> Trace:
    """Run the full loop and return the complete trace.

    oracle: callable(theta) -> float, total over the space. Deterministic
    oracles plus a fixed config seed give bit-identical traces.
    """
    t0 = time.perf_counter()
    m_count = len(config.kernel_families)
    w0 = (
        np.asarray(config.prior_weights, dtype=float)
        if config.prior_weights is not None
        else np.full(m_count, 1.0 / m_count)
    )
    if w0.shape != (m_count,) or abs(w0.sum() - 1.0) > 1e-9:
        raise ValueError("prior_weights must be a length-M probability vector")

    trace = Trace()
    thetas = init_design(space, config.t_init, seed=derive_seed(config.rng_seed, 13))
    ys: list[float] = []

    def ms() -> float:
        return (time.perf_counter() - t0) * 1000.0

    def eval_oracle(theta: np.ndarray) -> float:
        try:
            return float(oracle(theta))
        except Exception as e:
            raise OracleFailure(f"oracle failed at theta={theta!r}: {e}", trace) from e

    best = -np.inf
    for i in range(config.t_init):
        y = eval_oracle(thetas[i])
        ys.append(y)
        best = max(best, y)
        trace.records.append(
            TraceRecord(
                iteration=i - config.t_init + 1,
                theta=thetas[i].copy(),
                y=y,
                model_index=None,
                weights=w0.copy(),
                best_y=best,
                runtime_ms=ms(),
            )
        )

    specs = _initial_specs(config.kernel_families, space)
    noise_vars = [1e-4] * m_count
    z_data = [thetas[i] for i in range(config.t_init)]

    for t in range(1, config.t + 1):
        z_arr = np.array(z_data)
        y_arr = np.array(ys)
        # standardize targets for the surrogates; EI is invariant when the
        # incumbent is standardized the same way
        y_mean = float(y_arr.mean())
        y_std = float(y_arr.std())
        if y_std <= 0:
            y_std = 1.0
        y_s = (y_arr - y_mean) / y_std

        if (t - 1) % config.refit_every == 0:
            for m in range(m_count):
                specs[m], noise_vars[m] = fit_hyperparameters(
                    specs[m],
                    z_arr,
                    y_s,
                    budget=config.fit_budget,
                    n_starts=config.fit_starts,
                    seed=derive_seed(config.rng_seed, 14, t, m),
                    noise_variance=noise_vars[m],
                )
        models = [
            fit_posterior(GpModel(kernel=specs[m], noise_variance=noise_vars[m]), z_arr, y_s)
            for m in range(m_count)
        ]
        weights = update_weights(models, w0)
        m_t = sample_model(weights, seed=derive_seed(config.rng_seed, 15, t))
        r_max_s = float(y_s.max())
        budget = replace(config.acquisition, rng_seed=derive_seed(config.rng_seed, 16, t))
        theta_next = maximize_af(models[m_t], r_max_s, space, budget)
        y = eval_oracle(theta_next)
        z_data.append(theta_next)
        ys.append(y)
        best = max(best, y)
        trace.records.append(
            TraceRecord(
                iteration=t,
                theta=theta_next.copy(),
                y=y,
                model_index=m_t,
                weights=weights.copy(),
                best_y=best,
                runtime_ms=ms(),
            )
        )
    return trace


def best_plan(trace: Trace, space: SearchSpace) -> tuple[np.ndarray, ViewPlan, float]:
    """Best observed record (earliest on ties), decoded into camera poses."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    idx = int(np.argmax(trace.y))
    rec = trace.records[idx]
    return rec.theta.copy(), decode_plan(rec.theta, space), rec.y
