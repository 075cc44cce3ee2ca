"""Exact Gaussian-process regression: kernels, posterior, marginal likelihood,
and derivative-free hyperparameter fitting.

Datasets here stay small (at most a few hundred points), so every fit is an
exact O(t^3) Cholesky solve; no approximations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist

from viewplan.seeds import derive_seed

RBF_ARD = "rbf-ard"
MATERN_25 = "matern-2.5"
PERIODIC = "periodic"
KERNEL_FAMILIES = (RBF_ARD, MATERN_25, PERIODIC)

_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters.

    lengthscales is per-dimension for rbf-ard and a single shared value for
    the other families. period applies to the periodic family only and is
    shared across dimensions.
    """

    family: str
    signal_variance: float = 1.0
    lengthscales: float | np.ndarray = 1.0
    period: float = 2 * np.pi

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        ls = np.asarray(self.lengthscales, dtype=float)
        if not (np.all(ls > 0) and np.all(np.isfinite(ls))):
            raise ValueError("lengthscales must be positive and finite")
        if not (self.signal_variance > 0 and np.isfinite(self.signal_variance)):
            raise ValueError("signal_variance must be positive and finite")
        if not (self.period > 0 and np.isfinite(self.period)):
            raise ValueError("period must be positive and finite")
        object.__setattr__(self, "lengthscales", ls)


def kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-covariance matrix between row sets a (n, D) and b (m, D)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("input dimensions differ")
    sf2 = spec.signal_variance
    if spec.family == RBF_ARD:
        ls = np.broadcast_to(spec.lengthscales, (a.shape[1],))
        d2 = cdist(a / ls, b / ls, metric="sqeuclidean")
        return sf2 * np.exp(-0.5 * d2)
    if spec.family == MATERN_25:
        ell = float(np.asarray(spec.lengthscales).reshape(-1)[0])
        r = cdist(a, b)
        s = _SQRT5 * r / ell
        return sf2 * (1.0 + s + s**2 / 3.0) * np.exp(-s)
    # periodic
    ell = float(np.asarray(spec.lengthscales).reshape(-1)[0])
    diff = a[:, None, :] - b[None, :, :]
    s2 = np.sum(np.sin(np.pi * diff / spec.period) ** 2, axis=2)
    return sf2 * np.exp(-2.0 * s2 / ell**2)


def kernel_eval(spec: KernelSpec, z1, z2) -> float:
    """Pointwise kernel value between two input vectors."""
    z1 = np.asarray(z1, dtype=float).reshape(1, -1)
    z2 = np.asarray(z2, dtype=float).reshape(1, -1)
    return float(kernel_matrix(spec, z1, z2)[0, 0])


def gram(spec: KernelSpec, Z: np.ndarray) -> np.ndarray:
    k = kernel_matrix(spec, Z, Z)
    return 0.5 * (k + k.T)


@dataclass(frozen=True)
class GpModel:
    """Zero-mean GP with cached Cholesky factor of K + sigma_n^2 I.

    Immutable after fit_posterior; predict and log_marginal_likelihood are
    read-only. variance_clamps counts negative-variance clamp events, kept
    in a one-element array so the model object itself stays frozen.
    """

    kernel: KernelSpec
    noise_variance: float = 1e-6
    Z: np.ndarray | None = None
    y: np.ndarray | None = None
    chol: np.ndarray | None = None
    alpha: np.ndarray | None = None
    jitter: float = 0.0
    variance_clamps: np.ndarray | None = None

    @property
    def n_train(self) -> int:
        return 0 if self.Z is None else self.Z.shape[0]

    @property
    def fitted(self) -> bool:
        return self.Z is None or self.chol is not None


class FactorizationError(RuntimeError):
    """Covariance factorization failed even at maximum jitter."""


def fit_posterior(model: GpModel, Z=None, y=None) -> GpModel:
    """Cache the Cholesky factorization for the (optionally new) training set.

    On failure, diagonal jitter starting at 1e-9 * sigma_f^2 escalates by
    x10 up to 1e-3 * sigma_f^2; the jitter actually used is recorded.
    """
    Z = model.Z if Z is None else np.atleast_2d(np.asarray(Z, dtype=float))
    y = model.y if y is None else np.asarray(y, dtype=float).reshape(-1)
    if Z is None or Z.shape[0] == 0:
        return replace(model, Z=None, y=None, chol=None, alpha=None, jitter=0.0)
    if y is None or y.shape[0] != Z.shape[0]:
        raise ValueError("y must match Z row count")
    k = gram(model.kernel, Z) + model.noise_variance * np.eye(Z.shape[0])
    sf2 = model.kernel.signal_variance
    jitter = 0.0
    while True:
        try:
            chol = cholesky(k + jitter * np.eye(Z.shape[0]), lower=True)
            break
        except np.linalg.LinAlgError:
            pass
        if jitter == 0.0:
            jitter = 1e-9 * sf2
        elif jitter < 1e-3 * sf2:
            jitter = min(jitter * 10.0, 1e-3 * sf2)
        else:
            raise FactorizationError(
                f"covariance not factorizable at max jitter {1e-3 * sf2:g}"
            )
    alpha = solve_triangular(
        chol.T, solve_triangular(chol, y, lower=True), lower=False
    )
    return replace(
        model,
        Z=Z,
        y=y,
        chol=chol,
        alpha=alpha,
        jitter=jitter,
        variance_clamps=np.zeros(1, dtype=np.int64),
    )


def _require_fitted(model: GpModel):
    if model.Z is not None and model.chol is None:
        raise ValueError("model has training data but no cached factorization; call fit_posterior")


def predict_batch(model: GpModel, Zq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query rows Zq. Variance clamped at 0."""
    _require_fitted(model)
    Zq = np.atleast_2d(np.asarray(Zq, dtype=float))
    prior_var = np.full(Zq.shape[0], model.kernel.signal_variance)
    if model.Z is None:
        return np.zeros(Zq.shape[0]), prior_var
    kq = kernel_matrix(model.kernel, model.Z, Zq)  # (t, q)
    mu = kq.T @ model.alpha
    v = solve_triangular(model.chol, kq, lower=True)
    var = prior_var - np.sum(v**2, axis=0)
    neg = var < 0
    if neg.any() and model.variance_clamps is not None:
        model.variance_clamps[0] += int(neg.sum())
    return mu, np.maximum(var, 0.0)


def predict(model: GpModel, z) -> tuple[float, float]:
    mu, var = predict_batch(model, np.asarray(z, dtype=float).reshape(1, -1))
    return float(mu[0]), float(var[0])


def log_marginal_likelihood(model: GpModel) -> float:
    """log N(y; 0, K + sigma_n^2 I) via the cached Cholesky factor."""
    _require_fitted(model)
    if model.Z is None:
        return 0.0
    t = model.n_train
    quad = float(model.y @ model.alpha)
    logdet = 2.0 * float(np.sum(np.log(np.diag(model.chol))))
    return -0.5 * quad - 0.5 * logdet - 0.5 * t * np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# Hyperparameter fitting: multi-start coordinate pattern search in log space.
# ---------------------------------------------------------------------------


def _pack(spec: KernelSpec, noise_variance: float, d: int) -> np.ndarray:
    sf = np.log(spec.signal_variance)
    sn = np.log(max(noise_variance, 1e-12))
    if spec.family == RBF_ARD:
        ls = np.log(np.broadcast_to(spec.lengthscales, (d,)).astype(float))
        return np.concatenate([[sf], ls, [sn]])
    ell = np.log(float(np.asarray(spec.lengthscales).reshape(-1)[0]))
    if spec.family == PERIODIC:
        return np.array([sf, ell, np.log(spec.period), sn])
    return np.array([sf, ell, sn])


def _unpack(x: np.ndarray, family: str, d: int) -> tuple[KernelSpec, float]:
    sf2 = float(np.exp(x[0]))
    sn2 = float(np.exp(x[-1]))
    if family == RBF_ARD:
        spec = KernelSpec(family, sf2, np.exp(x[1 : 1 + d]))
    elif family == PERIODIC:
        spec = KernelSpec(family, sf2, float(np.exp(x[1])), period=float(np.exp(x[2])))
    else:
        spec = KernelSpec(family, sf2, float(np.exp(x[1])))
    return spec, sn2


def _log_bounds(family: str, Z: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = Z.shape[1]
    rng_per_dim = np.maximum(Z.max(axis=0) - Z.min(axis=0), 1e-3)
    vy = max(float(np.var(y)), 1e-6)
    sf_lo, sf_hi = np.log(1e-3 * vy), np.log(1e3 * vy)
    sn_lo, sn_hi = np.log(1e-8), np.log(1.0)
    if family == RBF_ARD:
        lo = np.concatenate([[sf_lo], np.log(1e-2 * rng_per_dim), [sn_lo]])
        hi = np.concatenate([[sf_hi], np.log(1e2 * rng_per_dim), [sn_hi]])
    else:
        mean_rng = float(np.exp(np.mean(np.log(rng_per_dim))))
        if family == PERIODIC:
            p_lo, p_hi = np.log(0.1 * 2 * np.pi), np.log(4 * 2 * np.pi)
            lo = np.array([sf_lo, np.log(1e-2 * mean_rng), p_lo, sn_lo])
            hi = np.array([sf_hi, np.log(1e2 * mean_rng), p_hi, sn_hi])
        else:
            lo = np.array([sf_lo, np.log(1e-2 * mean_rng), sn_lo])
            hi = np.array([sf_hi, np.log(1e2 * mean_rng), sn_hi])
    return lo, hi


def _mll_of(x: np.ndarray, family: str, Z: np.ndarray, y: np.ndarray) -> float:
    spec, sn2 = _unpack(x, family, Z.shape[1])
    try:
        m = fit_posterior(GpModel(kernel=spec, noise_variance=sn2), Z, y)
        return log_marginal_likelihood(m)
    except (FactorizationError, FloatingPointError):
        return -np.inf


def _pattern_search(f, x0, lo, hi, budget: int) -> tuple[np.ndarray, float, int]:
    """Coordinate pattern search maximizing f; returns (x, f(x), evals used)."""
    x = np.clip(x0, lo, hi)
    fx = f(x)
    used = 1
    step = 0.5 * np.ones_like(x)
    while used < budget and step.max() > 1e-3:
        improved = False
        for i in range(x.size):
            if used >= budget:
                break
            for s in (step[i], -step[i]):
                cand = x.copy()
                cand[i] = np.clip(cand[i] + s, lo[i], hi[i])
                if cand[i] == x[i]:
                    continue
                fc = f(cand)
                used += 1
                if fc > fx:
                    x, fx = cand, fc
                    improved = True
                    break
                if used >= budget:
                    break
        if not improved:
            step *= 0.5
    return x, fx, used


def fit_hyperparameters(
    spec: KernelSpec,
    Z,
    y,
    budget: int = 200,
    n_starts: int = 8,
    seed: int = 0,
    noise_variance: float = 1e-4,
) -> tuple[KernelSpec, float]:
    """Maximize the marginal log-likelihood over kernel + noise hyperparameters.

    Start 0 is the supplied spec (so the result never regresses below it);
    remaining starts are random within the documented log-space ranges. Each
    start runs a coordinate pattern search with the given evaluation budget.
    Returns (fitted KernelSpec, fitted noise variance).
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if Z.shape[0] < 2:
        raise ValueError("need at least 2 data points to fit hyperparameters")
    if budget < 1 or n_starts < 1:
        raise ValueError("budget and n_starts must be >= 1")
    if np.allclose(Z, Z[0], atol=1e-12):
        raise ValueError("all training inputs are identical; hyperparameters unidentifiable")
    d = Z.shape[1]
    lo, hi = _log_bounds(spec.family, Z, y)
    rng = np.random.default_rng(derive_seed(seed, 8))

    def objective(x):
        return _mll_of(x, spec.family, Z, y)

    best_x = np.clip(_pack(spec, noise_variance, d), lo, hi)
    best_f = objective(best_x)
    # make sure the unclipped input spec is also respected as a floor
    x_in = _pack(spec, noise_variance, d)
    f_in = objective(x_in)
    if f_in > best_f:
        best_x, best_f = x_in, f_in
    starts = [best_x]
    for _ in range(n_starts - 1):
        starts.append(rng.uniform(lo, hi))
    for x0 in starts:
        x, fx, _ = _pattern_search(objective, x0, np.minimum(lo, x0), np.maximum(hi, x0), budget)
        if fx > best_f:
            best_x, best_f = x, fx
    out_spec, out_sn2 = _unpack(best_x, spec.family, d)
    return out_spec, out_sn2
