"""Quantitative evaluation: PSNR, SSIM, and neighborhood preservation rate."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imagecore import Image

__all__ = ["psnr", "ssim", "npr"]

_WIN = 11
_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03


def _as_array(img) -> np.ndarray:
    if isinstance(img, Image):
        return img.data
    return np.asarray(img, dtype=np.float64)


def psnr(a, b, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB over all pixels and channels.

    Returns +inf when the images are identical.
    """
    x = _as_array(a)
    yv = _as_array(b)
    if x.shape != yv.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {yv.shape}")
    mse = float(np.mean((x - yv) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_single(x: np.ndarray, y: np.ndarray) -> float:
    w = _gaussian_window(_WIN, _SIGMA)
    wx = sliding_window_view(x, (_WIN, _WIN))
    wy = sliding_window_view(y, (_WIN, _WIN))
    mu_x = np.tensordot(wx, w, axes=([2, 3], [0, 1]))
    mu_y = np.tensordot(wy, w, axes=([2, 3], [0, 1]))
    xx = np.tensordot(wx * wx, w, axes=([2, 3], [0, 1])) - mu_x**2
    yy = np.tensordot(wy * wy, w, axes=([2, 3], [0, 1])) - mu_y**2
    xy = np.tensordot(wx * wy, w, axes=([2, 3], [0, 1])) - mu_x * mu_y
    L = 255.0
    c1 = (_K1 * L) ** 2
    c2 = (_K2 * L) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def ssim(a, b) -> float:
    """Single-scale structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Averages the index over all fully-interior window positions; multi-channel
    images average the per-channel scores.  Requires both dimensions >= 11.
    """
    x = _as_array(a)
    yv = _as_array(b)
    if x.shape != yv.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {yv.shape}")
    if x.shape[0] < _WIN or x.shape[1] < _WIN:
        raise ValueError(f"images must be at least {_WIN}x{_WIN}")
    if x.ndim == 2:
        return _ssim_single(x, yv)
    return float(np.mean([_ssim_single(x[:, :, c], yv[:, :, c]) for c in range(x.shape[2])]))


def _knn_sets(items: np.ndarray, k: int) -> list[set[int]]:
    n = items.shape[0]
    d2 = ((items[:, None, :] - items[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    out = []
    for i in range(n):
        # stable sort so equal distances resolve to the lower index
        order = np.argsort(d2[i], kind="stable")
        out.append(set(order[:k].tolist()))
    return out


def npr(lr_items, hr_items, k: int) -> float:
    """Fraction of each item's k nearest LR-space neighbors that persist in HR space.

    Both inputs are (n, dim) arrays of vectors (the two dims may differ);
    neighborhoods use Euclidean distance with ties broken by index.  Returns
    the mean overlap fraction over all items.
    """
    lr = np.asarray(lr_items, dtype=np.float64)
    hr = np.asarray(hr_items, dtype=np.float64)
    if lr.ndim != 2 or hr.ndim != 2:
        raise ValueError("items must be 2-D arrays of vectors")
    if lr.shape[0] != hr.shape[0]:
        raise ValueError("item counts must match")
    n = lr.shape[0]
    if not (0 < k < n):
        raise ValueError(f"k must satisfy 0 < k < {n}")
    lr_nn = _knn_sets(lr, k)
    hr_nn = _knn_sets(hr, k)
    rates = [len(lr_nn[i] & hr_nn[i]) / k for i in range(n)]
    return float(np.mean(rates))
