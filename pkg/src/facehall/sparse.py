"""l1-regularized least-squares coding of a signal over a dictionary.

Minimizes  f(a) = ||target - D a||^2 + lam * ||a||_1  with an accelerated
proximal-gradient method (FISTA) using a fixed step 1/L, where L is a safe
upper bound on the largest eigenvalue of D^T D.  Momentum restarts whenever
the objective would increase, so the iterate sequence is non-increasing in f.
Internally the iteration runs on f/2 (same minimizer), which makes 1/L the
textbook-safe step for the half-quadratic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SparseCode",
    "SolverOptions",
    "soft_threshold",
    "lipschitz_estimate",
    "solve_l1",
]


@dataclass(frozen=True)
class SparseCode:
    """Coefficient vector with optional per-column subject labels."""

    alpha: np.ndarray
    labels: np.ndarray | None
    objective_value: float
    iterations_used: int

    def __post_init__(self):
        alpha = np.ascontiguousarray(np.asarray(self.alpha, dtype=np.float64))
        if alpha.ndim != 1:
            raise ValueError("alpha must be a vector")
        if not np.all(np.isfinite(alpha)):
            raise ValueError("alpha must be finite")
        labels = self.labels
        if labels is not None:
            labels = np.ascontiguousarray(np.asarray(labels, dtype=np.int64))
            if labels.shape != alpha.shape:
                raise ValueError("labels must align with alpha")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "labels", labels)


@dataclass
class SolverOptions:
    max_iters: int = 2000
    tol: float = 1e-6
    seed_alpha: np.ndarray | None = None
    lipschitz: float | None = None  # reuse a precomputed step bound


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Shrink each entry toward zero by t: sign(v) * max(|v| - t, 0)."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def lipschitz_estimate(dictionary: np.ndarray, iters: int = 100, tol: float = 1e-6) -> float:
    """Safe upper bound on the largest eigenvalue of D^T D.

    Power iteration (at most ``iters`` steps, stopping at relative change
    below ``tol``) inflated by 1%, so a gradient step of 1/L cannot overshoot.
    """
    D = np.asarray(dictionary, dtype=np.float64)
    if D.ndim != 2:
        raise ValueError("dictionary must be a matrix")
    if not np.any(D):
        raise ValueError("dictionary must be nonzero")
    G = D.T @ D
    n = G.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        lam_new = float(v @ w)
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            lam = lam_new
            break
        v = w / nw
        lam = lam_new
    return 1.01 * lam


def _half_objective(D, target, lam, alpha):
    r = target - D @ alpha
    return 0.5 * float(r @ r) + 0.5 * lam * float(np.abs(alpha).sum())


def solve_l1(
    dictionary: np.ndarray,
    target: np.ndarray,
    lam: float,
    opts: SolverOptions | None = None,
    labels: np.ndarray | None = None,
) -> SparseCode:
    """Solve  min_a ||target - D a||^2 + lam * ||a||_1.

    Deterministic given identical inputs and options.  Warm-startable through
    ``opts.seed_alpha``; the returned objective never exceeds the seed's.
    """
    D = np.asarray(dictionary, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if D.ndim != 2 or D.shape[0] != t.size:
        raise ValueError(
            f"dictionary rows {D.shape} must match target length {t.size}"
        )
    if lam < 0:
        raise ValueError("lam must be >= 0")
    opts = opts or SolverOptions()
    n = D.shape[1]

    L = opts.lipschitz if opts.lipschitz is not None else lipschitz_estimate(D)
    if L <= 0:
        raise ValueError("dictionary must be nonzero")
    step = 1.0 / L
    thresh = 0.5 * lam * step

    if opts.seed_alpha is not None:
        alpha = np.asarray(opts.seed_alpha, dtype=np.float64).reshape(-1).copy()
        if alpha.size != n:
            raise ValueError("seed_alpha length must match dictionary columns")
    else:
        alpha = np.zeros(n)

    def prox_step(point):
        grad = D.T @ (D @ point - t)
        return soft_threshold(point - step * grad, thresh)

    f_prev = _half_objective(D, t, lam, alpha)
    z = alpha
    t_mom = 1.0
    iterations = 0
    for iterations in range(1, opts.max_iters + 1):
        alpha_new = prox_step(z)
        f_new = _half_objective(D, t, lam, alpha_new)
        if f_new > f_prev:
            # momentum overshoot: restart and take a plain descent step
            alpha_new = prox_step(alpha)
            f_new = _half_objective(D, t, lam, alpha_new)
            t_mom = 1.0
            z = alpha_new
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            z = alpha_new + ((t_mom - 1.0) / t_next) * (alpha_new - alpha)
            t_mom = t_next
        converged = abs(f_prev - f_new) < opts.tol * max(abs(f_prev), 1e-300)
        alpha = alpha_new
        f_prev = f_new
        if converged:
            break

    r = t - D @ alpha
    objective = float(r @ r) + lam * float(np.abs(alpha).sum())
    return SparseCode(
        alpha=alpha,
        labels=labels,
        objective_value=objective,
        iterations_used=iterations,
    )
