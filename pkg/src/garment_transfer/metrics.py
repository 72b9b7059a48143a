"""Reference image/parsing quality metrics: IoU, CPA, MSE, PSNR, SSIM.

MSE and PSNR are reported on the 8-bit scale (inputs in [0, 1] are multiplied
by 255 before squaring) so their magnitudes match the usual published ranges.
"""
from __future__ import annotations

from typing import Protocol

import numpy as np
from scipy.signal import fftconvolve

from .domain import BinaryMask, CategoricalParsing, ImageTensor, ParsingHeatmap

_PEAK = 255.0
_LUMA = np.array([0.299, 0.587, 0.114])


def _arr(x) -> np.ndarray:
    if isinstance(x, (ImageTensor, BinaryMask)):
        return np.asarray(x.data, dtype=np.float64)
    if isinstance(x, CategoricalParsing):
        return np.asarray(x.labels)
    if isinstance(x, ParsingHeatmap):
        return np.asarray(x.probs, dtype=np.float64)
    return np.asarray(x)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")


def iou(a, b) -> float:
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    ma = _arr(a).astype(bool)
    mb = _arr(b).astype(bool)
    _check_same_shape(ma, mb)
    union = np.logical_or(ma, mb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(ma, mb).sum() / union)


def cpa(pred, gt, cls: int) -> float:
    """Class pixel accuracy: fraction of gt pixels of `cls` predicted as `cls`.

    Directional by definition (gt in the denominator); 1.0 when the class is
    absent from gt.
    """
    p = _arr(pred)
    g = _arr(gt)
    _check_same_shape(p, g)
    gt_pixels = g == cls
    total = gt_pixels.sum()
    if total == 0:
        return 1.0
    return float(np.logical_and(p == cls, gt_pixels).sum() / total)


def mse(a, b) -> float:
    """Mean squared error on the 8-bit scale (values in [0,1] scaled by 255)."""
    xa = _arr(a).astype(np.float64)
    xb = _arr(b).astype(np.float64)
    _check_same_shape(xa, xb)
    return float(np.mean((xa - xb) ** 2) * _PEAK * _PEAK)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for near-zero MSE."""
    err = mse(a, b)
    if err < _PEAK * _PEAK * 1e-10:
        return 100.0
    return float(10.0 * np.log10(_PEAK * _PEAK / err))


def _to_gray(x: np.ndarray) -> np.ndarray:
    if x.ndim == 3 and x.shape[2] == 3:
        return x @ _LUMA
    if x.ndim == 2:
        return x
    raise ValueError(f"expected HxW or HxWx3 image, got {x.shape}")


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, k1: float = 0.01, k2: float = 0.03) -> float:
    """Windowed structural similarity (11x11 Gaussian, sigma 1.5, range 1.0).

    RGB inputs are converted to luma first; the map is averaged over all
    fully-valid windows.
    """
    xa = _to_gray(_arr(a).astype(np.float64))
    xb = _to_gray(_arr(b).astype(np.float64))
    _check_same_shape(xa, xb)
    win = _gaussian_window()
    if xa.shape[0] < win.shape[0] or xa.shape[1] < win.shape[1]:
        raise ValueError(f"image {xa.shape} smaller than the {win.shape} SSIM window")

    def filt(x):
        return fftconvolve(x, win, mode="valid")

    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    mu_a = filt(xa)
    mu_b = filt(xb)
    var_a = filt(xa * xa) - mu_a ** 2
    var_b = filt(xb * xb) - mu_b ** 2
    cov = filt(xa * xb) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


class PerceptualMetric(Protocol):
    """Interface for learned full-reference metrics (FID/LPIPS-style).

    No implementation ships here; plug in an external scorer that maps an
    (image, image) pair to a scalar where lower means more similar.
    """

    def __call__(self, a: ImageTensor, b: ImageTensor) -> float: ...
