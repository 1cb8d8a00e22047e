"""Image-domain metrics: PSNR and per-pixel ADC fitting."""

import math

import numpy as np

from .errors import LospError

PSNR_CAP = 300.0
ADC_SENTINEL = -1.0


def image_psnr(recon: np.ndarray, reference: np.ndarray) -> float:
    """PSNR (dB) with peak 1: 10 log10(n_pixels / ||recon - reference||^2).

    ``reference`` is expected peak-normalized; identical inputs return the
    +300 dB cap.
    """
    recon = np.asarray(recon, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if recon.shape != reference.shape:
        raise LospError(f"shape mismatch {recon.shape} vs {reference.shape}")
    err = float(np.sum((recon - reference) ** 2))
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(recon.size / err))


def normalized_psnr(recon: np.ndarray, reference: np.ndarray) -> float:
    """PSNR after scaling both images by the reference peak."""
    peak = float(np.max(np.asarray(reference)))
    if peak <= 0:
        raise LospError("reference image has no positive peak")
    return image_psnr(np.asarray(recon) / peak, np.asarray(reference) / peak)


def adc_fit(signals: np.ndarray, b_values) -> np.ndarray:
    """Per-pixel least-squares ADC map from per-b-value magnitude images.

    Fits ln S_i = ln S0 - b_i * D at every pixel over the b-values where the
    signal is positive; pixels with fewer than two usable points (or a
    degenerate b spread) get the -1 sentinel. Units follow ``b_values``
    (s/mm^2 in, mm^2/s out).
    """
    signals = np.asarray(signals, dtype=np.float64)
    b = np.asarray(b_values, dtype=np.float64)
    if signals.ndim != 3 or signals.shape[0] != b.size:
        raise LospError("signals must be (n_b, M, N) matching b_values")
    if b.size < 2:
        raise LospError("at least two b-values are required")

    valid = signals > 0
    logs = np.where(valid, np.log(np.where(valid, signals, 1.0)), 0.0)
    bv = b[:, None, None]
    n = valid.sum(axis=0)
    sx = np.sum(valid * bv, axis=0)
    sy = np.sum(logs, axis=0)
    sxx = np.sum(valid * bv * bv, axis=0)
    sxy = np.sum(logs * bv, axis=0)
    denom = n * sxx - sx * sx
    ok = (n >= 2) & (denom > 1e-12 * np.maximum(sxx, 1.0))
    slope = np.where(ok, (n * sxy - sx * sy) / np.where(ok, denom, 1.0), 0.0)
    return np.where(ok, -slope, ADC_SENTINEL)
