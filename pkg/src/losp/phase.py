"""Organ-specific polynomial shot phases.

Each region o carries, per shot, a polynomial of order L_o over image
coordinates normalized to [-1, 1]: phase(x, y) = sum_{l=0..L_o} sum_{k=0..l}
A_lk x^k y^(l-k), with x along readout and y along phase encoding. Order 0 is
a rigid-translation constant, order 1 a rigid-rotation linear ramp, higher
orders model non-rigid deformation. Applying a spec to a phantom produces
phase-only shot images (magnitude preserved exactly).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LospError
from .phantom import Phantom


def n_poly_coeffs(order: int) -> int:
    """Number of A_lk coefficients for one region-shot: (L+1)(L+2)/2."""
    return (order + 1) * (order + 2) // 2


def coeff_index(l: int, k: int) -> int:
    """Flat index of A_lk in the (l, k)-lexicographic coefficient layout."""
    if not 0 <= k <= l:
        raise LospError(f"invalid coefficient indices l={l}, k={k}")
    return l * (l + 1) // 2 + k


@dataclass
class RegionPhase:
    """Polynomial phase of one region: ``coeffs[j, coeff_index(l, k)]``."""

    region_id: int
    order: int
    coeffs: np.ndarray  # float64 (n_shots, n_poly_coeffs(order))

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        expected = n_poly_coeffs(self.order)
        if self.coeffs.ndim != 2 or self.coeffs.shape[1] != expected:
            raise LospError(
                f"region {self.region_id}: order {self.order} needs "
                f"{expected} coefficients per shot, got {self.coeffs.shape}")


@dataclass
class PhaseSpec:
    n_shots: int
    regions: list[RegionPhase] = field(default_factory=list)

    def __post_init__(self):
        if self.n_shots < 1:
            raise LospError("n_shots must be >= 1")
        for r in self.regions:
            if r.coeffs.shape[0] != self.n_shots:
                raise LospError(
                    f"region {r.region_id} has coefficients for "
                    f"{r.coeffs.shape[0]} shots, spec has {self.n_shots}")

    def region_ids(self) -> list[int]:
        return [r.region_id for r in self.regions]

    def to_dict(self) -> dict:
        return {
            "n_shots": self.n_shots,
            "regions": [
                {"region_id": r.region_id, "order": r.order,
                 "coeffs": r.coeffs.tolist()}
                for r in self.regions
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PhaseSpec":
        regions = [RegionPhase(r["region_id"], r["order"], np.asarray(r["coeffs"]))
                   for r in doc["regions"]]
        return cls(doc["n_shots"], regions)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PhaseSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class ShotImageSet:
    """Phase-only modulated complex shot images: |shots[j]| == magnitude."""

    shots: np.ndarray  # complex128 (n_shots, size_ro, size_pe)
    phantom: Phantom


def sample_phase_spec(phantom: Phantom, n_shots: int,
                      order_range: tuple[int, int] = (1, 1),
                      coeff_scale: float = math.pi,
                      seed: int = 0,
                      order_overrides: dict[int, tuple[int, int]] | None = None,
                      zero_first_shot: bool = False) -> PhaseSpec:
    """Draw a random phase spec for every region of ``phantom``.

    Each region gets an order uniform in ``order_range`` (overridable per
    region id) and coefficients uniform in [-coeff_scale, coeff_scale] per
    shot. ``zero_first_shot`` forces shot 1's coefficients to zero for
    controlled experiments.
    """
    omin, omax = order_range
    if not 0 <= omin <= omax:
        raise LospError(f"invalid order_range {order_range}")
    if coeff_scale < 0:
        raise LospError("coeff_scale must be >= 0")
    rng = np.random.default_rng(seed)
    overrides = order_overrides or {}
    regions = []
    for r in phantom.regions:
        lo, hi = overrides.get(r.id, (omin, omax))
        order = int(rng.integers(lo, hi + 1))
        coeffs = rng.uniform(-coeff_scale, coeff_scale,
                             size=(n_shots, n_poly_coeffs(order)))
        if zero_first_shot:
            coeffs[0] = 0.0
        regions.append(RegionPhase(r.id, order, coeffs))
    return PhaseSpec(n_shots, regions)


def _normalized_coords(size_ro: int, size_pe: int):
    x = np.linspace(-1.0, 1.0, size_ro) if size_ro > 1 else np.zeros(1)
    y = np.linspace(-1.0, 1.0, size_pe) if size_pe > 1 else np.zeros(1)
    return np.meshgrid(x, y, indexing="ij")


def _check_regions(spec: PhaseSpec, phantom: Phantom):
    missing = set(spec.region_ids()) - set(phantom.region_ids)
    if missing:
        raise LospError(f"phase spec references unknown region ids {sorted(missing)}")


def render_shot_phase(spec: PhaseSpec, phantom: Phantom, shot_index: int) -> np.ndarray:
    """Phase field (radians) of shot ``shot_index`` (1-based).

    Zero on pixels not covered by any region in the spec.
    """
    if not 1 <= shot_index <= spec.n_shots:
        raise LospError(f"shot_index {shot_index} outside [1, {spec.n_shots}]")
    _check_regions(spec, phantom)
    xs, ys = _normalized_coords(phantom.size_ro, phantom.size_pe)
    phase = np.zeros((phantom.size_ro, phantom.size_pe), dtype=np.float64)
    for rp in spec.regions:
        mask = phantom.region(rp.region_id).mask
        if not mask.any():
            continue
        x, y = xs[mask], ys[mask]
        val = np.zeros(x.shape, dtype=np.float64)
        c = rp.coeffs[shot_index - 1]
        for l in range(rp.order + 1):
            for k in range(l + 1):
                val += c[coeff_index(l, k)] * x ** k * y ** (l - k)
        phase[mask] = val
    return phase


def apply_phase(phantom: Phantom, spec: PhaseSpec) -> ShotImageSet:
    """Modulate the phantom magnitude with each shot's phase field."""
    _check_regions(spec, phantom)
    shots = np.empty((spec.n_shots, phantom.size_ro, phantom.size_pe),
                     dtype=np.complex128)
    for j in range(1, spec.n_shots + 1):
        shots[j - 1] = phantom.magnitude * np.exp(1j * render_shot_phase(spec, phantom, j))
    return ShotImageSet(shots, phantom)
