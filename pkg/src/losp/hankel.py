"""Block-Hankel lifting of multi-shot 1D signals and SVD truncation.

A set of J complex signals of length L is lifted, shot by shot, to a
sliding-window Hankel block of shape (L-w+1, w); blocks are concatenated
along columns in shot order. The adjoint, the diagonal frame weights of
H*H, rank truncation and singular spectra defined here are shared by the
rank-labeling oracle and the ADMM solver.
"""

from dataclasses import dataclass

import numpy as np

from .errors import LospError

LAYOUTS = ("complex-shot-concat", "realimag-split")


@dataclass(frozen=True)
class HankelSpec:
    """Geometry of the lifted matrix for one line family."""

    window: int
    length: int
    n_shots: int
    layout: str = "complex-shot-concat"

    def __post_init__(self):
        if not 1 <= self.window <= self.length:
            raise LospError(f"need 1 <= window <= length, got {self.window}, {self.length}")
        if self.n_shots < 1:
            raise LospError("n_shots must be >= 1")
        if self.layout not in LAYOUTS:
            raise LospError(f"unknown Hankel layout {self.layout!r}")

    @property
    def n_rows(self) -> int:
        return self.length - self.window + 1

    @property
    def n_cols(self) -> int:
        per_shot = self.window * (2 if self.layout == "realimag-split" else 1)
        return self.n_shots * per_shot

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def r_max(self) -> int:
        return min(self.n_rows, self.n_cols)

    @property
    def n_entries(self) -> int:
        return self.n_rows * self.n_cols


def _as_signals(signals, spec: HankelSpec) -> np.ndarray:
    arr = np.asarray(signals)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape != (spec.n_shots, spec.length):
        raise LospError(
            f"expected {spec.n_shots} signals of length {spec.length}, got {arr.shape}")
    return arr.astype(np.complex128, copy=False)


def lift_stack(lines: np.ndarray, spec: HankelSpec) -> np.ndarray:
    """Lift a stack of line sets ``(n, J, L)`` to matrices ``(n, rows, cols)``."""
    n, J, L = lines.shape
    if (J, L) != (spec.n_shots, spec.length):
        raise LospError("line stack does not match HankelSpec")
    if spec.layout == "realimag-split":
        parts = np.empty((n, 2 * J, L), dtype=np.float64)
        parts[:, 0::2] = lines.real
        parts[:, 1::2] = lines.imag
        lines = parts
    win = np.lib.stride_tricks.sliding_window_view(lines, spec.window, axis=2)
    # (n, blocks, rows, w) -> (n, rows, blocks * w)
    return win.transpose(0, 2, 1, 3).reshape(n, spec.n_rows, spec.n_cols)


def adjoint_stack(mats: np.ndarray, spec: HankelSpec) -> np.ndarray:
    """Adjoint of :func:`lift_stack`; returns line sets ``(n, J, L)``."""
    mats = np.asarray(mats)
    n = mats.shape[0]
    if mats.shape[1:] != spec.shape:
        raise LospError("matrix stack does not match HankelSpec")
    if spec.layout == "realimag-split":
        if np.iscomplexobj(mats):
            raise LospError("realimag-split adjoint expects a real matrix")
        acc_dtype = np.float64
    else:
        acc_dtype = np.complex128
    n_blocks = spec.n_cols // spec.window
    blocks = mats.reshape(n, spec.n_rows, n_blocks, spec.window).transpose(0, 2, 1, 3)
    acc = np.zeros((n, n_blocks, spec.length), dtype=acc_dtype)
    for t in range(spec.window):
        acc[:, :, t:t + spec.n_rows] += blocks[:, :, :, t]
    if spec.layout == "realimag-split":
        return acc[:, 0::2] + 1j * acc[:, 1::2]
    return acc


def lift(signals, spec: HankelSpec) -> np.ndarray:
    """Lift J signals of length L to the block-Hankel matrix of ``spec``."""
    arr = _as_signals(signals, spec)
    return lift_stack(arr[None], spec)[0]


def adjoint(matrix: np.ndarray, spec: HankelSpec) -> np.ndarray:
    """Adjoint of :func:`lift`: each signal entry collects every matrix entry
    it was copied to."""
    matrix = np.asarray(matrix)
    if matrix.shape != spec.shape:
        raise LospError(f"expected matrix of shape {spec.shape}, got {matrix.shape}")
    return adjoint_stack(matrix[None], spec)[0]


def frame_weights(spec: HankelSpec) -> np.ndarray:
    """Multiplicity of each signal entry in one Hankel block.

    ``H* H`` equals this diagonal replicated per shot:
    weight_k = min(k, w, L-w+1, L-k+1) for 1-based k.
    """
    k = np.arange(1, spec.length + 1)
    return np.minimum.reduce([
        k,
        np.full(spec.length, spec.window),
        np.full(spec.length, spec.n_rows),
        spec.length - k + 1,
    ]).astype(np.int64)


def delift(matrix: np.ndarray, spec: HankelSpec) -> np.ndarray:
    """Least-squares projection back to signals: adjoint / frame weights."""
    return adjoint(matrix, spec) / frame_weights(spec)


def delift_stack(mats: np.ndarray, spec: HankelSpec) -> np.ndarray:
    return adjoint_stack(mats, spec) / frame_weights(spec)


def truncate_svd(matrix: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Best rank-``min(r, r_max)`` approximation plus the full spectrum.

    Returns (truncated matrix, singular values in descending order). Ties in
    the spectrum keep the first r values in the computed ordering.
    """
    if r < 1:
        raise LospError("truncation rank must be >= 1")
    u, s, vh = np.linalg.svd(np.asarray(matrix), full_matrices=False)
    r = min(r, s.size)
    approx = (u[:, :r] * s[:r]) @ vh[:r]
    return approx, s


def truncate_stack(mats: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    """Rank-truncate a stack of matrices with per-matrix ranks."""
    u, s, vh = np.linalg.svd(mats, full_matrices=False)
    ranks = np.minimum(np.asarray(ranks, dtype=np.int64), s.shape[-1])
    keep = np.arange(s.shape[-1])[None, :] < ranks[:, None]
    return (u * (s * keep)[:, None, :]) @ vh


def singular_values(signals, spec: HankelSpec) -> np.ndarray:
    """Descending singular spectrum of the lifted signals."""
    return np.linalg.svd(lift(signals, spec), compute_uv=False)


def energy_rank(sigma: np.ndarray, fraction: float = 0.99) -> int:
    """Smallest k whose leading k singular values carry ``fraction`` of the
    squared spectrum energy (0 for an all-zero spectrum)."""
    e = np.cumsum(np.asarray(sigma, dtype=np.float64) ** 2)
    if e.size == 0 or e[-1] == 0.0:
        return 0
    return int(np.searchsorted(e, fraction * e[-1]) + 1)
