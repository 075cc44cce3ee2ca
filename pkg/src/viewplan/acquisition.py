"""Expected improvement and its derivative-free maximization over the search space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from viewplan.geometry import SearchSpace
from viewplan.gp import GpModel, predict_batch
from viewplan.seeds import derive_seed

_SIGMA_FLOOR = 1e-12
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def expected_improvement(mu, sigma, r_max: float):
    """Closed-form EI for a Gaussian posterior: E[max(0, r - r_max)].

    Accepts scalars or arrays. Below sigma = 1e-12 the degenerate branch
    max(0, mu - r_max) is used to avoid 0/0 in the standardized gap.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be >= 0")
    delta = mu - r_max
    safe_sigma = np.where(sigma > _SIGMA_FLOOR, sigma, 1.0)
    u = delta / safe_sigma
    phi = _INV_SQRT_2PI * np.exp(-0.5 * u**2)
    ei = delta * ndtr(u) + safe_sigma * phi
    ei = np.where(sigma > _SIGMA_FLOOR, ei, np.maximum(delta, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


@dataclass(frozen=True)
class AcquisitionBudget:
    """Evaluation budget for acquisition maximization."""

    n_random_candidates: int = 2048
    n_refine_starts: int = 8
    refine_steps: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.n_random_candidates, self.n_refine_starts, self.refine_steps) < 1:
            raise ValueError("all acquisition budget fields must be positive")


def _ei_at(model: GpModel, r_max: float, pts: np.ndarray) -> np.ndarray:
    mu, var = predict_batch(model, pts)
    return expected_improvement(mu, np.sqrt(var), r_max)


def maximize_af(
    model: GpModel,
    r_max: float,
    space: SearchSpace,
    budget: AcquisitionBudget = AcquisitionBudget(),
) -> np.ndarray:
    """Maximize EI of the given model: random probing plus coordinate refinement.

    Angular dims wrap at their bounds during refinement; others clip. Ties
    break toward the lowest candidate index, so the result is deterministic
    for a fixed seed.
    """
    rng = np.random.default_rng(derive_seed(budget.rng_seed, 10))
    lo, hi = space.lower, space.upper
    span = hi - lo
    cands = lo + rng.random((budget.n_random_candidates, space.dimension)) * span
    ei = _ei_at(model, r_max, cands)
    order = np.argsort(-ei, kind="stable")
    n_starts = min(budget.n_refine_starts, cands.shape[0])
    pm = space.periodic_mask()

    def clip_wrap_rows(p: np.ndarray) -> np.ndarray:
        out = np.clip(p, lo, hi)
        out[:, pm] = lo[pm] + np.mod(p[:, pm] - lo[pm], 2.0 * np.pi)
        return out

    best_x = cands[order[0]].copy()
    best_ei = float(ei[order[0]])
    for s in range(n_starts):
        x = cands[order[s]].copy()
        fx = float(ei[order[s]])
        step = 0.25 * span.copy()
        for _ in range(budget.refine_steps):
            probes = np.repeat(x[None, :], 2 * space.dimension, axis=0)
            for i in range(space.dimension):
                probes[2 * i, i] += step[i]
                probes[2 * i + 1, i] -= step[i]
            probes = clip_wrap_rows(probes)
            fp = _ei_at(model, r_max, probes)
            j = int(np.argmax(fp))
            if fp[j] > fx:
                x = probes[j]
                fx = float(fp[j])
            else:
                step *= 0.5
                if step.max() < 1e-9 * span.max():
                    break
        if fx > best_ei:
            best_x, best_ei = x, fx
    return best_x
