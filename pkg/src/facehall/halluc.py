"""Alternating face super-resolution with a training-face subspace prior.

Starting from a sparse coding of the low-resolution input over the LR
dictionary, the driver alternates an exact frequency-domain data-fit update
of the high-resolution estimate with a fresh l1 coding of that estimate over
the HR dictionary, warm-started from the previous coefficients.  The final
coefficient vector doubles as a sparse-representation classifier input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .degrade import degrade as degrade_image
from .freqsolve import SpectralOperator, build_spectral, x_update
from .imagecore import DictionaryPair, Image, devectorize, vectorize
from .metrics import psnr
from .sparse import SolverOptions, SparseCode, lipschitz_estimate, solve_l1

__all__ = [
    "HallucinationParams",
    "HallucinationResult",
    "objective",
    "joint_objective",
    "hallucinate",
    "hallucinate_color",
    "classify_src",
]


@dataclass(frozen=True)
class HallucinationParams:
    """Regularization weights and iteration budget.

    ``mu`` weights the pull toward the dictionary span, ``lam`` the sparsity
    of the coefficients.  Defaults follow the raw 8-bit intensity scale.
    """

    mu: float = 1e-8
    lam: float = 2700.0
    iterations: int = 30
    sparse_opts: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be > 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass(frozen=True)
class HallucinationResult:
    """Final estimate, final coefficients, and per-iteration diagnostics.

    ``objective_trace`` records :func:`joint_objective` after every
    alternation; that is the cost both subproblem solvers provably decrease,
    so the trace is non-increasing up to solver tolerance.
    """

    x_hat: Image
    alpha_hat: SparseCode
    objective_trace: np.ndarray
    per_iteration_psnr: np.ndarray | None = None


def _terms(x, alpha, y, pair):
    a = alpha.alpha if isinstance(alpha, SparseCode) else np.asarray(alpha, dtype=np.float64)
    if a.shape != (pair.n,):
        raise ValueError("alpha length must match dictionary columns")
    if x.dims != pair.hr_dims or y.dims != pair.lr_dims:
        raise ValueError("image dimensions inconsistent with dictionary")
    lr = degrade_image(x, pair.degradation)
    fit = float(((y.data - lr.data) ** 2).sum())
    prior = float(((vectorize(x) - pair.d_h @ a) ** 2).sum())
    return fit, prior, float(np.abs(a).sum())


def objective(
    x: Image,
    alpha: np.ndarray | SparseCode,
    y: Image,
    pair: DictionaryPair,
    params: HallucinationParams,
) -> float:
    """Nominal cost: data misfit + mu * distance to the dictionary span + lam * |alpha|_1."""
    fit, prior, l1 = _terms(x, alpha, y, pair)
    return fit + params.mu * prior + params.lam * l1


def joint_objective(
    x: Image,
    alpha: np.ndarray | SparseCode,
    y: Image,
    pair: DictionaryPair,
    params: HallucinationParams,
) -> float:
    """Cost the alternation actually descends.

    The closed-form x-step minimizes the data misfit plus 2*mu times the
    prior distance, and the coefficient step minimizes the prior distance
    plus lam times the l1 term; jointly they perform exact coordinate descent
    on  fit + 2*mu*prior + 2*mu*lam*|alpha|_1,  which therefore decreases
    monotonically with warm starts.
    """
    fit, prior, l1 = _terms(x, alpha, y, pair)
    return fit + 2.0 * params.mu * (prior + params.lam * l1)


def hallucinate(
    y: Image,
    pair: DictionaryPair,
    params: HallucinationParams | None = None,
    ground_truth: Image | None = None,
    lr_mask: np.ndarray | None = None,
) -> HallucinationResult:
    """Reconstruct the high-resolution face behind a degraded single-channel input.

    With ``lr_mask`` (boolean LR grid, True = trusted pixel), masked-out
    pixels of ``y`` are zeroed and the matching LR dictionary rows are zeroed
    for the initial coding; the data-fit operator itself is unchanged.  The
    output is clamped to [0, 255] only at the end; the recorded objective
    trace uses the unclamped iterates.

    Note the degradation that produced ``y`` is not observable here: passing a
    dictionary built under different blur/scale settings silently mismatches.
    """
    if params is None:
        params = HallucinationParams()
    if y.channels != 1:
        raise ValueError("hallucinate expects a single-channel input; see hallucinate_color")
    if y.dims != pair.lr_dims:
        raise ValueError(f"input dims {y.dims} do not match dictionary LR dims {pair.lr_dims}")
    if ground_truth is not None and ground_truth.dims != pair.hr_dims:
        raise ValueError("ground truth dims must match dictionary HR dims")

    d_l = pair.d_l
    y_eff = y
    if lr_mask is not None:
        mask = np.asarray(lr_mask, dtype=bool)
        if mask.shape != pair.lr_dims:
            raise ValueError("lr_mask shape must match the LR grid")
        y_eff = Image(np.where(mask, y.data, 0.0))
        d_l = np.where(mask.reshape(-1, 1), pair.d_l, 0.0)

    spec = build_spectral(pair.degradation.psf, pair.hr_dims, pair.degradation.d)

    base_opts = params.sparse_opts
    l_hr = base_opts.lipschitz
    if l_hr is None:
        l_hr = lipschitz_estimate(pair.d_h)

    init = solve_l1(d_l, vectorize(y_eff), params.lam, replace(base_opts, seed_alpha=None))
    alpha = init.alpha

    trace = np.empty(params.iterations)
    psnr_trace = np.empty(params.iterations) if ground_truth is not None else None
    x = None
    code = init
    for it in range(params.iterations):
        prior = devectorize(pair.d_h @ alpha, pair.hr_dims)
        x = x_update(y_eff, prior, spec, params.mu)
        code = solve_l1(
            pair.d_h,
            vectorize(x),
            params.lam,
            replace(base_opts, seed_alpha=alpha, lipschitz=l_hr),
            labels=pair.labels,
        )
        alpha = code.alpha
        trace[it] = joint_objective(x, alpha, y_eff, pair, params)
        if psnr_trace is not None:
            psnr_trace[it] = psnr(x, ground_truth)

    x_out = Image(np.clip(x.data, 0.0, 255.0))
    return HallucinationResult(
        x_hat=x_out,
        alpha_hat=code,
        objective_trace=trace,
        per_iteration_psnr=psnr_trace,
    )


def hallucinate_color(
    y: Image,
    pair: DictionaryPair,
    params: HallucinationParams | None = None,
    ground_truth: Image | None = None,
    lr_mask: np.ndarray | None = None,
) -> list[HallucinationResult]:
    """Run :func:`hallucinate` independently on each channel of a 3-channel input.

    Returns one result per channel; callers can stack ``x_hat`` planes back
    into a color image.  The dictionary is shared across channels.
    """
    if y.channels != 3:
        raise ValueError("hallucinate_color expects a 3-channel input")
    results = []
    for c in range(3):
        gt_c = Image(ground_truth.data[:, :, c]) if ground_truth is not None else None
        results.append(
            hallucinate(Image(y.data[:, :, c]), pair, params, gt_c, lr_mask)
        )
    return results


def classify_src(
    alpha: np.ndarray | SparseCode,
    pair: DictionaryPair,
    space: str = "hr",
    y: Image | None = None,
) -> tuple[int, dict[int, float]]:
    """Sparse-representation classification from a coefficient vector.

    For each subject c, the residual is the l2 distance between the full
    reconstruction and the reconstruction restricted to subject c's
    coefficients (``space='hr'``), or between the observed LR input and the
    subject-restricted LR reconstruction (``space='lr'``, requires ``y``).
    Returns the argmin subject; ties break toward the lowest subject id.
    """
    a = alpha.alpha if isinstance(alpha, SparseCode) else np.asarray(alpha, dtype=np.float64)
    if a.shape != (pair.n,):
        raise ValueError("alpha length must match dictionary columns")
    classes = np.unique(pair.labels)
    if classes.size == 0:
        raise ValueError("dictionary has no classes")
    if space == "hr":
        reference = pair.d_h @ a
        basis = pair.d_h
    elif space == "lr":
        if y is None:
            raise ValueError("space='lr' requires the observed input y")
        if y.dims != pair.lr_dims:
            raise ValueError("y dims must match dictionary LR dims")
        reference = vectorize(y)
        basis = pair.d_l
    else:
        raise ValueError("space must be 'hr' or 'lr'")

    residuals: dict[int, float] = {}
    for c in classes:
        restricted = np.where(pair.labels == c, a, 0.0)
        residuals[int(c)] = float(np.linalg.norm(reference - basis @ restricted))
    best = min(residuals, key=lambda c: (residuals[c], c))
    return best, residuals
