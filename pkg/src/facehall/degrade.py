"""Forward degradation operators: cyclic blur, decimation, zero interpolation.

The blur uses periodic (cyclic) boundaries so that it diagonalizes in the
2-D DFT basis, which the frequency-domain solver relies on.  Decimation keeps
the samples at rows/cols congruent to 0 mod d (phase (0, 0)); its adjoint
re-inserts them into a zero grid.  ``dense_operators`` materializes both as
explicit matrices for oracle testing at small sizes.
"""

from __future__ import annotations

import numpy as np

from .imagecore import DegradationParams, Image, Psf

__all__ = [
    "blur_cyclic",
    "blur_cyclic_adjoint",
    "decimate",
    "zero_interpolate",
    "degrade",
    "dense_operators",
]

_DENSE_LIMIT = 4096


def _check_single_channel(image: Image):
    if image.channels != 1:
        raise ValueError("operation expects a single-channel image")


def _blur_array(arr: np.ndarray, psf: Psf) -> np.ndarray:
    k = psf.kernel
    ar, ac = psf.anchor
    if k.shape[0] > arr.shape[0] or k.shape[1] > arr.shape[1]:
        raise ValueError("psf larger than image")
    out = np.zeros_like(arr)
    for kr in range(k.shape[0]):
        for kc in range(k.shape[1]):
            v = k[kr, kc]
            if v != 0.0:
                out += v * np.roll(arr, shift=(kr - ar, kc - ac), axis=(0, 1))
    return out


def blur_cyclic(image: Image, psf: Psf) -> Image:
    """Cyclic convolution with the kernel anchored at ``psf.anchor``.

    out(p) = sum_k psf(k) * image((p - k + anchor) mod dims).
    """
    _check_single_channel(image)
    return Image(_blur_array(image.data, psf))


def blur_cyclic_adjoint(image: Image, psf: Psf) -> Image:
    """Adjoint of :func:`blur_cyclic`: cyclic correlation with the same kernel."""
    _check_single_channel(image)
    k = psf.kernel[::-1, ::-1].copy()
    ar = k.shape[0] - 1 - psf.anchor[0]
    ac = k.shape[1] - 1 - psf.anchor[1]
    return Image(_blur_array(image.data, Psf(k, (ar, ac))))


def decimate(image: Image, d: int) -> Image:
    """Keep every d-th sample in both directions, starting at (0, 0)."""
    if d < 1:
        raise ValueError("scaling factor must be >= 1")
    h, w = image.dims
    if h % d or w % d:
        raise ValueError(f"dimensions {h}x{w} not divisible by {d}")
    return Image(image.data[::d, ::d].copy())


def zero_interpolate(image: Image, d: int) -> Image:
    """Adjoint of :func:`decimate`: place samples on the phase-(0,0) grid, zeros elsewhere."""
    if d < 1:
        raise ValueError("scaling factor must be >= 1")
    h, w = image.dims
    if image.channels == 1:
        out = np.zeros((h * d, w * d))
    else:
        out = np.zeros((h * d, w * d, image.channels))
    out[::d, ::d] = image.data
    return Image(out)


def degrade(image: Image, params: DegradationParams, seed: int = 0) -> Image:
    """Blur, decimate, and optionally add white Gaussian noise.

    Noise uses a seeded generator; with ``noise_sigma == 0`` the output is
    fully deterministic.  Multi-channel images are processed per channel.
    """
    d = params.d
    h, w = image.dims
    if h % d or w % d:
        raise ValueError(f"dimensions {h}x{w} not divisible by {d}")
    if image.channels == 1:
        clean = decimate(blur_cyclic(image, params.psf), d).data
    else:
        clean = np.stack(
            [
                decimate(blur_cyclic(Image(image.data[:, :, c]), params.psf), d).data
                for c in range(image.channels)
            ],
            axis=2,
        )
    if params.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        clean = clean + rng.normal(0.0, params.noise_sigma, size=clean.shape)
    return Image(clean)


def dense_operators(psf: Psf, hr_dims: tuple[int, int], d: int) -> tuple[np.ndarray, np.ndarray]:
    """Explicit (H, S) matrices acting on row-major vectorized images.

    Column j of H is the blurred impulse at position j; S keeps the
    phase-(0, 0) samples.  Intended for oracle testing only (m_h <= 4096).
    """
    h, w = int(hr_dims[0]), int(hr_dims[1])
    m_h = h * w
    if m_h > _DENSE_LIMIT:
        raise ValueError(f"dense operator size {m_h} exceeds limit {_DENSE_LIMIT}")
    if h % d or w % d:
        raise ValueError(f"dimensions {h}x{w} not divisible by {d}")
    k = psf.kernel
    if k.shape[0] > h or k.shape[1] > w:
        raise ValueError("psf larger than image")
    ar, ac = psf.anchor

    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    H = np.zeros((m_h, m_h))
    # out[p] = sum_k psf[k] * img[(p - k + anchor) mod dims]  =>  H[p, q] += psf[k]
    for kr in range(k.shape[0]):
        for kc in range(k.shape[1]):
            v = k[kr, kc]
            if v == 0.0:
                continue
            src_r = (rows - kr + ar) % h
            src_c = (cols - kc + ac) % w
            p = (rows * w + cols).reshape(-1)
            q = (src_r * w + src_c).reshape(-1)
            H[p, q] += v

    h_l, w_l = h // d, w // d
    m_l = h_l * w_l
    kept_r = np.arange(0, h, d)[:, None]
    kept_c = np.arange(0, w, d)[None, :]
    kept = (kept_r * w + kept_c).reshape(-1)
    S = np.zeros((m_l, m_h))
    S[np.arange(m_l), kept] = 1.0
    return H, S
