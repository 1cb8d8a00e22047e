"""Shared binary/text artifact formats.

* ``LOSPARR1`` arrays: magic, u8 ndims, little-endian u64 dims, then float32
  (re, im) pairs row-major. One format for phantoms, k-space and images
  (real arrays round-trip with zero imaginary parts).
* P5 portable graymaps: 16-bit (big-endian, per the PGM standard) for
  windowed image exports, 8-bit for region label masks.
* CSV tables with shortest-round-trip float formatting, so emitted bytes are
  a deterministic function of the values.
"""

import struct

import numpy as np

from .errors import FormatError, LospError
from .hankel import HankelSpec, singular_values

ARRAY_MAGIC = b"LOSPARR1"


def save_array(arr: np.ndarray, path) -> None:
    arr = np.asarray(arr)
    data = arr.astype("<c8") if np.iscomplexobj(arr) else arr.astype(np.float64).astype("<c8")
    with open(path, "wb") as fh:
        fh.write(ARRAY_MAGIC)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(np.ascontiguousarray(data).tobytes())


def load_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != ARRAY_MAGIC:
        raise FormatError("not a LOSPARR1 array file")
    if len(raw) < 9:
        raise FormatError("truncated array header")
    ndim = raw[8]
    header_end = 9 + 8 * ndim
    if len(raw) < header_end:
        raise FormatError("truncated array dims")
    shape = struct.unpack_from(f"<{ndim}Q", raw, 9)
    count = int(np.prod(shape)) if ndim else 1
    if len(raw) != header_end + 8 * count:
        raise FormatError("array payload size mismatch")
    data = np.frombuffer(raw, dtype="<c8", count=count, offset=header_end)
    return data.reshape(shape).astype(np.complex128)


def load_real_array(path) -> np.ndarray:
    """Load an array expected to be real-valued (imaginary parts dropped)."""
    return load_array(path).real


def export_image(img: np.ndarray, path, window=None) -> None:
    """Write a 16-bit binary P5 graymap with linear windowing.

    ``window=[lo, hi]`` (default: [min, max]) maps linearly onto [0, 65535];
    values are clipped, quantization is rounding, bytes are big-endian.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise LospError("export_image needs a non-empty 2D array")
    if not np.all(np.isfinite(img)):
        raise LospError("export_image needs finite values")
    if window is None:
        lo, hi = float(img.min()), float(img.max())
    else:
        lo, hi = float(window[0]), float(window[1])
    span = hi - lo
    if span > 0:
        scaled = np.clip((img - lo) / span, 0.0, 1.0) * 65535.0
    else:
        scaled = np.zeros_like(img)
    quantized = np.rint(scaled).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode())
        fh.write(quantized.tobytes())


def write_label_pgm(labels: np.ndarray, path) -> None:
    """Write uint8 region labels (0 = background) as an 8-bit P5 graymap."""
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 2 or labels.size == 0:
        raise LospError("label image must be non-empty 2D")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{labels.shape[1]} {labels.shape[0]}\n255\n".encode())
        fh.write(labels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read the P5 files written by this module."""
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError("not a binary P5 graymap")
    width, height = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    dtype = ">u2" if maxval > 255 else np.uint8
    data = np.frombuffer(parts[3], dtype=dtype, count=width * height)
    return data.reshape(height, width)


def format_value(value) -> str:
    """Shortest round-trip text for floats; plain str otherwise."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def export_sv_curve(signals, spec: HankelSpec, path) -> None:
    """CSV of a line's descending singular spectrum with a sigma/sigma_1
    column (the attenuation-curve export)."""
    sigma = singular_values(signals, spec)
    top = sigma[0] if sigma.size and sigma[0] > 0 else 1.0
    rows = [(i + 1, s, s / top) for i, s in enumerate(sigma)]
    write_csv(path, ["index", "sigma", "sigma_normalized"], rows)
