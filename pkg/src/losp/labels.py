"""Hybrid-space 1D lines, HSVD recovery, and rank-label synthesis.

A "hybrid" array is shot k-space inverse-transformed along one axis. Lines
running along the readout k-axis live at fixed image-domain PE positions
(direction tag ``"ro"``), and vice versa (``"pe"``). Each line is the J-shot
signal the solver regularizes; the training oracle recovers a noisy line by
Hankel SVD truncation at every candidate rank and labels it with the rank of
highest PSNR against the paired clean line.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import hankel
from .encoding import fft1c, fft2c, ifft1c
from .errors import FormatError, LospError
from .parallel import map_chunks
from .phantom import generate_phantom
from .phase import apply_phase, sample_phase_spec

DIRECTIONS = ("ro", "pe")
PSNR_CAP = 300.0
DATASET_MAGIC = b"LOSPDS01"
DATASET_VERSION = 1

# direction -> axis of (J, M, N) that the 1D inverse transform runs along
_TRANSFORM_AXIS = {"ro": 2, "pe": 1}


def lines_from_kspace(X: np.ndarray, direction: str) -> np.ndarray:
    """All hybrid-space lines of ``X`` as a stack ``(n_lines, J, L)``.

    ``"ro"``: inverse transform along PE, one line per PE-image position
    (n_lines = N, L = M); ``"pe"`` symmetrically (n_lines = M, L = N).
    """
    if direction not in DIRECTIONS:
        raise LospError(f"unknown direction {direction!r}")
    hybrid = ifft1c(np.asarray(X, dtype=np.complex128), axis=_TRANSFORM_AXIS[direction])
    if direction == "ro":
        return np.ascontiguousarray(hybrid.transpose(2, 0, 1))
    return np.ascontiguousarray(hybrid.transpose(1, 0, 2))


def kspace_from_lines(lines: np.ndarray, direction: str) -> np.ndarray:
    """Inverse of :func:`lines_from_kspace`."""
    if direction == "ro":
        hybrid = lines.transpose(1, 2, 0)
    elif direction == "pe":
        hybrid = lines.transpose(1, 0, 2)
    else:
        raise LospError(f"unknown direction {direction!r}")
    return fft1c(np.ascontiguousarray(hybrid), axis=_TRANSFORM_AXIS[direction])


@dataclass
class HybridLine:
    """One extracted line: J shot signals, peak-magnitude normalized.

    ``scale`` is the peak magnitude removed at normalization (0 for an
    all-zero line, whose signals are stored as-is).
    """

    direction: str
    position: int
    signals: np.ndarray  # complex128 (J, L)
    scale: float

    @property
    def n_shots(self) -> int:
        return self.signals.shape[0]

    @property
    def length(self) -> int:
        return self.signals.shape[1]


def make_hybrid_line(direction: str, position: int, signals: np.ndarray) -> HybridLine:
    signals = np.asarray(signals, dtype=np.complex128)
    scale = float(np.max(np.abs(signals))) if signals.size else 0.0
    if scale > 0.0:
        signals = signals / scale
    else:
        signals = signals.copy()
    return HybridLine(direction, position, signals, scale)


def extract_lines(X: np.ndarray, direction: str) -> list[HybridLine]:
    """Extract every hybrid line of shot k-space ``X`` (shape (J, M, N))."""
    stack = lines_from_kspace(X, direction)
    return [make_hybrid_line(direction, pos, stack[pos]) for pos in range(stack.shape[0])]


def hsvd_recover(line: HybridLine, r: int, spec: hankel.HankelSpec) -> np.ndarray:
    """Denoise a line by rank-r Hankel truncation: lift, truncate, de-lift."""
    truncated, _ = hankel.truncate_svd(hankel.lift(line.signals, spec), r)
    return hankel.delift(truncated, spec)


def line_psnr(recovered: np.ndarray, clean: np.ndarray, spec: hankel.HankelSpec) -> float:
    """PSNR (dB) between lifted matrices, peak 1, capped at +300 dB.

    PSNR = 10 log10(E / ||H(clean) - H(recovered)||_F^2) with E the number of
    lifted-matrix entries; identical inputs return the cap.
    """
    recovered = np.asarray(recovered)
    clean = np.asarray(clean)
    if recovered.shape != clean.shape:
        raise LospError("recovered/clean length mismatch")
    diff = hankel.lift(clean, spec) - hankel.lift(recovered, spec)
    err = float(np.sum(np.abs(diff) ** 2))
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(spec.n_entries / err))


def psnr_curve(noisy: HybridLine, clean: HybridLine, spec: hankel.HankelSpec) -> np.ndarray:
    """PSNR of HSVD recovery at every rank r = 1..r_max (vectorized sweep)."""
    mat = hankel.lift(noisy.signals, spec)
    ref = hankel.lift(clean.signals, spec)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    # cumulative best rank-r approximations via rank-1 terms
    terms = s[:, None, None] * u.T[:, :, None] * vh[:, None, :]
    partial = np.cumsum(terms, axis=0)[:spec.r_max]
    recovered = hankel.delift_stack(partial, spec)
    relifted = hankel.lift_stack(recovered, spec)
    errs = np.sum(np.abs(ref[None] - relifted) ** 2, axis=(1, 2))
    curve = np.empty(spec.r_max, dtype=np.float64)
    for i, err in enumerate(errs):
        curve[i] = PSNR_CAP if err == 0.0 else min(
            PSNR_CAP, 10.0 * math.log10(spec.n_entries / err))
    return curve


def optimal_rank(noisy: HybridLine, clean: HybridLine,
                 spec: hankel.HankelSpec) -> tuple[int, np.ndarray]:
    """Exhaustive rank traversal: argmax of the PSNR curve, ties to smaller r."""
    curve = psnr_curve(noisy, clean, spec)
    return int(np.argmax(curve)) + 1, curve


# ---------------------------------------------------------------------------
# labeled dataset synthesis


@dataclass
class SampleMeta:
    n_shots: int
    snr_db: float
    seed: int
    phantom_id: int


@dataclass
class TrainingSample:
    noisy: HybridLine
    clean: HybridLine
    label: int
    meta: SampleMeta


@dataclass
class LabeledDataset:
    spec: hankel.HankelSpec
    samples: list[TrainingSample]
    version: int = DATASET_VERSION


@dataclass
class DatasetConfig:
    """Full synthesis pipeline parameters for one J."""

    size_ro: int = 64
    size_pe: int = 64
    n_regions: int = 6
    n_shots: int = 2
    order_range: tuple[int, int] = (0, 5)
    coeff_scale: float = math.pi
    order_overrides: dict = field(default_factory=dict)
    window: int = 10
    n_images: int = 16
    snr_range: tuple[float, float] = (1.0, 15.0)
    seed: int = 0

    def hankel_spec(self) -> hankel.HankelSpec:
        if self.size_ro != self.size_pe:
            raise LospError("dataset images must be square so RO and PE lines "
                            "share one signal length")
        return hankel.HankelSpec(self.window, self.size_ro, self.n_shots)


def add_full_grid_noise(X: np.ndarray, snr_db: float, seed: int) -> np.ndarray:
    """Complex Gaussian noise over every entry of shot k-space (no sampling)."""
    if math.isinf(snr_db) and snr_db > 0:
        return X.copy()
    p_signal = float(np.mean(np.abs(X) ** 2))
    if p_signal == 0.0:
        raise LospError("cannot set a finite SNR on all-zero data")
    sigma = math.sqrt(p_signal / (10.0 ** (snr_db / 10.0)) / 2.0)
    rng = np.random.default_rng(seed)
    noise = rng.normal(scale=sigma, size=X.shape + (2,))
    return X + noise[..., 0] + 1j * noise[..., 1]


def _image_samples(cfg: DatasetConfig, image_index: int) -> list[TrainingSample]:
    spec = cfg.hankel_spec()
    seeds = np.random.SeedSequence((cfg.seed, cfg.n_shots, image_index)).generate_state(4)
    phantom = generate_phantom(cfg.size_ro, cfg.size_pe, cfg.n_regions, int(seeds[0]))
    pspec = sample_phase_spec(
        phantom, cfg.n_shots, cfg.order_range, cfg.coeff_scale, int(seeds[1]),
        order_overrides={int(k): tuple(v) for k, v in cfg.order_overrides.items()})
    x_gt = fft2c(apply_phase(phantom, pspec).shots)
    snr_db = float(np.random.default_rng(int(seeds[2])).uniform(*cfg.snr_range))
    x_inp = add_full_grid_noise(x_gt, snr_db, int(seeds[3]))

    samples = []
    for direction in DIRECTIONS:
        clean_stack = lines_from_kspace(x_gt, direction)
        noisy_stack = lines_from_kspace(x_inp, direction)
        for pos in range(clean_stack.shape[0]):
            clean = make_hybrid_line(direction, pos, clean_stack[pos])
            noisy = make_hybrid_line(direction, pos, noisy_stack[pos])
            label, _ = optimal_rank(noisy, clean, spec)
            meta = SampleMeta(cfg.n_shots, snr_db, cfg.seed, image_index)
            samples.append(TrainingSample(noisy, clean, label, meta))
    return samples


def synthesize_dataset(cfg: DatasetConfig, threads: int = 1) -> LabeledDataset:
    """Generate the labeled line dataset: phantom -> phase -> k-space ->
    noise -> lines -> labels, both directions, n_images x (M + N) samples.

    Deterministic in ``cfg.seed``; images are independently seeded so
    parallel generation is bit-identical to serial.
    """
    spec = cfg.hankel_spec()
    per_image: list[list[TrainingSample]] = [[] for _ in range(cfg.n_images)]

    def worker(lo, hi):
        for i in range(lo, hi):
            per_image[i] = _image_samples(cfg, i)

    map_chunks(worker, cfg.n_images, threads)
    samples = [s for block in per_image for s in block]
    return LabeledDataset(spec, samples)


# ---------------------------------------------------------------------------
# dataset file format


def save_dataset(ds: LabeledDataset, path) -> None:
    spec = ds.spec
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IIIIQ", ds.version, spec.n_shots, spec.window,
                             spec.length, len(ds.samples)))
        for s in ds.samples:
            fh.write(struct.pack("<BIfH", 0 if s.noisy.direction == "ro" else 1,
                                 s.noisy.position, s.meta.snr_db, s.label))
            fh.write(s.clean.signals.astype("<c8").tobytes())
            fh.write(s.noisy.signals.astype("<c8").tobytes())


def load_dataset(path) -> LabeledDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != DATASET_MAGIC:
        raise FormatError("not a labeled-line dataset file")
    if len(raw) < 8 + 24:
        raise FormatError("truncated dataset header")
    version, n_shots, window, length, count = struct.unpack_from("<IIIIQ", raw, 8)
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    spec = hankel.HankelSpec(window, length, n_shots)
    sig_bytes = n_shots * length * 8
    rec = 11 + 2 * sig_bytes
    if len(raw) != 32 + count * rec:
        raise FormatError("dataset payload size mismatch")
    samples = []
    off = 32
    for _ in range(count):
        d, pos, snr_db, label = struct.unpack_from("<BIfH", raw, off)
        off += 11
        direction = "ro" if d == 0 else "pe"
        clean = np.frombuffer(raw, dtype="<c8", count=n_shots * length,
                              offset=off).reshape(n_shots, length)
        off += sig_bytes
        noisy = np.frombuffer(raw, dtype="<c8", count=n_shots * length,
                              offset=off).reshape(n_shots, length)
        off += sig_bytes
        samples.append(TrainingSample(
            HybridLine(direction, pos, noisy.astype(np.complex128), 1.0),
            HybridLine(direction, pos, clean.astype(np.complex128), 1.0),
            int(label), SampleMeta(n_shots, float(snr_db), 0, -1)))
    return LabeledDataset(spec, samples, version)
