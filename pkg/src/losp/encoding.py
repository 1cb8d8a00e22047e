"""Interleaved multi-shot EPI acquisition model.

Centered unitary Fourier transforms, per-shot phase-encoding sampling masks,
simulated coil sensitivities, the forward/adjoint encoding operator and
k-space noise injection. Array layout conventions:

* shot k-space ``X``: complex ``(J, M, N)`` with axis 1 = readout (RO) and
  axis 2 = phase encoding (PE);
* acquired data ``Y``: complex ``(J, n_coils, M, N)``, exactly zero on
  unsampled (shot, PE line) locations.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LospError

PATTERNS = ("interleaved", "uniform", "partial-fourier")


# ---------------------------------------------------------------------------
# centered unitary transforms


def fftnc(x, axes):
    """Centered (DC at array center), unitary n-dim FFT over ``axes``."""
    x = np.fft.ifftshift(x, axes=axes)
    x = np.fft.fftn(x, axes=axes, norm="ortho")
    return np.fft.fftshift(x, axes=axes)


def ifftnc(x, axes):
    """Inverse of :func:`fftnc`."""
    x = np.fft.ifftshift(x, axes=axes)
    x = np.fft.ifftn(x, axes=axes, norm="ortho")
    return np.fft.fftshift(x, axes=axes)


def fft2c(img):
    """Centered unitary 2D FFT over the last two axes."""
    return fftnc(img, axes=(-2, -1))


def ifft2c(ksp):
    """Centered unitary 2D inverse FFT over the last two axes."""
    return ifftnc(ksp, axes=(-2, -1))


def fft1c(x, axis):
    """Centered unitary 1D FFT along ``axis``."""
    return fftnc(x, axes=(axis,))


def ifft1c(x, axis):
    """Centered unitary 1D inverse FFT along ``axis``."""
    return ifftnc(x, axes=(axis,))


# ---------------------------------------------------------------------------
# sampling masks


@dataclass
class ShotSampling:
    """Per-shot boolean masks over the PE lines of a ``(M, N)`` grid.

    ``masks[j, p]`` is True when shot ``j`` acquires PE line ``p`` (0-based).
    """

    n_shots: int
    n_pe: int
    pattern: str
    rate: float
    masks: np.ndarray  # bool (n_shots, n_pe)

    def line_indices(self, shot: int) -> np.ndarray:
        return np.flatnonzero(self.masks[shot])

    def sampling_rate(self) -> float:
        return float(self.masks.sum()) / self.n_pe

    def to_dict(self) -> dict:
        return {
            "n_shots": self.n_shots,
            "n_pe": self.n_pe,
            "pattern": self.pattern,
            "rate": self.rate,
            "index_base": 0,
            "shots": [self.line_indices(j).tolist() for j in range(self.n_shots)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ShotSampling":
        masks = np.zeros((doc["n_shots"], doc["n_pe"]), dtype=bool)
        for j, lines in enumerate(doc["shots"]):
            masks[j, np.asarray(lines, dtype=int)] = True
        return cls(doc["n_shots"], doc["n_pe"], doc["pattern"], doc["rate"], masks)


def make_shot_masks(n_shots: int, n_pe: int, pattern: str = "interleaved",
                    rate: float = 1.0) -> ShotSampling:
    """Build interleaved per-shot PE masks, optionally undersampled.

    ``interleaved``: shot j (0-based) acquires lines {j, j+J, j+2J, ...};
    shots are pairwise disjoint and tile all lines (requires rate == 1).
    ``uniform``: keeps every (1/rate)-th interleaved line of each shot
    (1/rate must be an integer; rate 0.5 is the x2 SENSE-style pattern).
    ``partial-fourier``: keeps each shot's interleaved lines inside the
    contiguous block [0, round(rate * n_pe)), i.e. one full asymmetric side
    plus the low-frequency center; the high-index side is truncated.
    """
    if not 1 <= n_shots <= n_pe:
        raise LospError(f"need 1 <= n_shots <= n_pe, got {n_shots}, {n_pe}")
    if pattern not in PATTERNS:
        raise LospError(f"unknown sampling pattern {pattern!r}")
    if not 0.0 < rate <= 1.0:
        raise LospError(f"rate must be in (0, 1], got {rate}")

    masks = np.zeros((n_shots, n_pe), dtype=bool)
    if pattern == "interleaved":
        if rate != 1.0:
            raise LospError("interleaved pattern requires rate = 1.0")
        for j in range(n_shots):
            masks[j, j::n_shots] = True
    elif pattern == "uniform":
        step = 1.0 / rate
        if abs(step - round(step)) > 1e-9:
            raise LospError(f"uniform rate {rate} is not 1/integer")
        step = int(round(step))
        for j in range(n_shots):
            masks[j, j::n_shots * step] = True
    else:  # partial-fourier
        keep = int(round(rate * n_pe))
        if keep <= n_pe // 2:
            raise LospError(
                f"partial-Fourier rate {rate} drops the center line on {n_pe} lines")
        for j in range(n_shots):
            masks[j, j:keep:n_shots] = True
        if not masks.any(axis=1).all():
            raise LospError("partial-Fourier rate leaves a shot with no lines")
    return ShotSampling(n_shots, n_pe, pattern, rate, masks)


# ---------------------------------------------------------------------------
# coil sensitivities


@dataclass
class CoilMaps:
    """Complex sensitivity maps, normalized so sum_c |C_c|^2 = 1 everywhere."""

    n_coils: int
    maps: np.ndarray  # complex (n_coils, M, N)

    shape: tuple = field(init=False)

    def __post_init__(self):
        self.shape = self.maps.shape[1:]


def simulate_coils(size_ro: int, size_pe: int, n_coils: int, seed: int) -> CoilMaps:
    """Gaussian-lobe coil sensitivities placed around the FOV.

    n_coils = 1 yields the exact all-ones map. Otherwise each coil gets a
    smooth Gaussian magnitude lobe centered on a jittered ring just outside
    the image plus a random low-order phase; the stack is normalized to
    sum-of-squares 1 at every pixel. Deterministic in ``seed``.
    """
    if n_coils < 1:
        raise LospError("n_coils must be >= 1")
    if n_coils == 1:
        return CoilMaps(1, np.ones((1, size_ro, size_pe), dtype=np.complex128))

    rng = np.random.default_rng(seed)
    xs, ys = np.meshgrid(np.arange(size_ro), np.arange(size_pe), indexing="ij")
    cx0, cy0 = (size_ro - 1) / 2.0, (size_pe - 1) / 2.0
    radius = 0.6 * max(size_ro, size_pe)
    width = 0.7 * max(size_ro, size_pe)

    maps = np.empty((n_coils, size_ro, size_pe), dtype=np.complex128)
    for c in range(n_coils):
        theta = 2 * math.pi * (c + rng.uniform(-0.15, 0.15)) / n_coils
        cx = cx0 + radius * math.cos(theta)
        cy = cy0 + radius * math.sin(theta)
        w = width * rng.uniform(0.8, 1.2)
        mag = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * w * w))
        # smooth linear phase per coil, a fraction of a cycle across the FOV
        gx, gy, g0 = rng.uniform(-math.pi, math.pi, size=3)
        phase = gx * (xs - cx0) / size_ro + gy * (ys - cy0) / size_pe + g0
        maps[c] = mag * np.exp(1j * phase)

    norm = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    maps /= norm
    return CoilMaps(n_coils, maps)


# ---------------------------------------------------------------------------
# encoding operator


@dataclass
class MultiShotKSpace:
    """Acquired (shot, coil, RO, PE) k-space with its sampling pattern."""

    data: np.ndarray  # complex (J, n_coils, M, N)
    sampling: ShotSampling

    def __post_init__(self):
        if self.data.ndim != 4:
            raise LospError("MultiShotKSpace data must be (J, n_coils, M, N)")
        if self.data.shape[0] != self.sampling.n_shots \
                or self.data.shape[3] != self.sampling.n_pe:
            raise LospError("MultiShotKSpace data/sampling shape mismatch")


def _check_shapes(X, coils: CoilMaps, sampling: ShotSampling):
    J, M, N = X.shape
    if sampling.n_shots != J or sampling.n_pe != N:
        raise LospError("sampling does not match k-space shape")
    if coils.shape != (M, N):
        raise LospError("coil maps do not match k-space shape")


def forward_encode(X: np.ndarray, coils: CoilMaps, sampling: ShotSampling) -> MultiShotKSpace:
    """Apply per shot j, coil c: U_j F2(C_c * F2^{-1}(X_j)); zeros off-mask."""
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 3:
        raise LospError("X must be (J, M, N)")
    _check_shapes(X, coils, sampling)
    imgs = ifft2c(X)  # (J, M, N)
    data = fft2c(coils.maps[None, :, :, :] * imgs[:, None, :, :])
    data *= sampling.masks[:, None, None, :]
    return MultiShotKSpace(data, sampling)


def adjoint_encode(Y: MultiShotKSpace, coils: CoilMaps, sampling: ShotSampling) -> np.ndarray:
    """Exact adjoint of :func:`forward_encode` (zero-filled reconstruction)."""
    data = np.asarray(Y.data, dtype=np.complex128)
    J, n_coils, M, N = data.shape
    if coils.n_coils != n_coils or coils.shape != (M, N):
        raise LospError("coil maps do not match acquired data")
    if sampling.n_shots != J or sampling.n_pe != N:
        raise LospError("sampling does not match acquired data")
    masked = data * sampling.masks[:, None, None, :]
    imgs = ifft2c(masked)
    combined = np.sum(np.conj(coils.maps)[None] * imgs, axis=1)
    return fft2c(combined)


def add_complex_noise(data: MultiShotKSpace, snr_db: float, seed: int) -> MultiShotKSpace:
    """Add i.i.d. circular complex Gaussian noise on sampled entries.

    The noise power is set so that 10*log10(mean |signal|^2 / mean |noise|^2)
    over sampled entries equals ``snr_db`` in expectation. ``snr_db = inf``
    returns the input unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return MultiShotKSpace(data.data.copy(), data.sampling)
    mask = np.broadcast_to(data.sampling.masks[:, None, None, :], data.data.shape)
    sampled = data.data[mask]
    p_signal = float(np.mean(np.abs(sampled) ** 2)) if sampled.size else 0.0
    if p_signal == 0.0:
        raise LospError("cannot set a finite SNR on all-zero data")
    p_noise = p_signal / (10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noise = rng.normal(scale=math.sqrt(p_noise / 2.0), size=(sampled.size, 2))
    out = data.data.copy()
    out[mask] += noise[:, 0] + 1j * noise[:, 1]
    return MultiShotKSpace(out, data.sampling)
