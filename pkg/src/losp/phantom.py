"""Procedural multi-region magnitude phantoms.

Seeded random ellipses stand in for an anatomical atlas: region 1 is always a
large central "liver-like" ellipse covering at least 10% of the image, later
regions are smaller ellipses clipped by earlier ones so the masks partition
their union. The magnitude image is the sum of mask * value over regions,
peak-normalized to 1 (region values are rescaled by the same factor so the
composition identity holds exactly).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import PhantomError

PLACEMENT_BUDGET = 200  # attempts per region before giving up


@dataclass(frozen=True)
class EllipseParams:
    """Ellipse in pixel units: center, semi-axes, rotation (radians)."""

    cx: float
    cy: float
    a: float
    b: float
    theta: float


@dataclass
class OrganRegion:
    id: int
    mask: np.ndarray  # bool (size_ro, size_pe)
    magnitude_value: float
    shape_params: EllipseParams


@dataclass
class Phantom:
    size_ro: int
    size_pe: int
    regions: list[OrganRegion]
    magnitude: np.ndarray  # float64 (size_ro, size_pe), peak 1 unless all-zero

    @property
    def region_ids(self) -> list[int]:
        return [r.id for r in self.regions]

    def region(self, region_id: int) -> OrganRegion:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(f"no region with id {region_id}")

    def label_image(self) -> np.ndarray:
        """uint8 labels: 0 = background, region id elsewhere."""
        labels = np.zeros((self.size_ro, self.size_pe), dtype=np.uint8)
        for r in self.regions:
            labels[r.mask] = r.id
        return labels


def _ellipse_mask(size_ro: int, size_pe: int, p: EllipseParams) -> np.ndarray:
    xs, ys = np.meshgrid(np.arange(size_ro, dtype=np.float64),
                         np.arange(size_pe, dtype=np.float64), indexing="ij")
    dx, dy = xs - p.cx, ys - p.cy
    u = dx * math.cos(p.theta) + dy * math.sin(p.theta)
    v = -dx * math.sin(p.theta) + dy * math.cos(p.theta)
    return (u / p.a) ** 2 + (v / p.b) ** 2 <= 1.0


def generate_phantom(size_ro: int, size_pe: int, n_regions: int, seed: int,
                     magnitude_range: tuple[float, float] = (0.2, 1.0)) -> Phantom:
    """Deterministically generate a phantom with ``n_regions`` disjoint masks.

    Raises :class:`PhantomError` when a region cannot be placed within the
    fixed attempt budget (small images with many regions).
    """
    if size_ro < 8 or size_pe < 8:
        raise PhantomError("phantom sizes must be >= 8")
    if n_regions < 1:
        raise PhantomError("n_regions must be >= 1")
    lo, hi = magnitude_range
    if not 0.0 <= lo <= hi:
        raise PhantomError("invalid magnitude_range")

    rng = np.random.default_rng(seed)
    n_pixels = size_ro * size_pe
    covered = np.zeros((size_ro, size_pe), dtype=bool)
    regions: list[OrganRegion] = []

    for rid in range(1, n_regions + 1):
        placed = False
        for _ in range(PLACEMENT_BUDGET):
            if rid == 1:
                # liver-like: big, central, must cover >= 10% of pixels
                params = EllipseParams(
                    cx=(0.30 + 0.40 * rng.random()) * (size_ro - 1),
                    cy=(0.30 + 0.40 * rng.random()) * (size_pe - 1),
                    a=(0.28 + 0.14 * rng.random()) * size_ro,
                    b=(0.28 + 0.14 * rng.random()) * size_pe,
                    theta=rng.random() * math.pi,
                )
                min_pixels = max(4, int(math.ceil(0.10 * n_pixels)))
            else:
                params = EllipseParams(
                    cx=(0.10 + 0.80 * rng.random()) * (size_ro - 1),
                    cy=(0.10 + 0.80 * rng.random()) * (size_pe - 1),
                    a=(0.06 + 0.14 * rng.random()) * size_ro,
                    b=(0.06 + 0.14 * rng.random()) * size_pe,
                    theta=rng.random() * math.pi,
                )
                min_pixels = 4
            mask = _ellipse_mask(size_ro, size_pe, params) & ~covered
            if int(mask.sum()) >= min_pixels:
                value = float(rng.uniform(lo, hi))
                regions.append(OrganRegion(rid, mask, value, params))
                covered |= mask
                placed = True
                break
        if not placed:
            raise PhantomError(
                f"could not place region {rid} of {n_regions} on a "
                f"{size_ro}x{size_pe} grid within {PLACEMENT_BUDGET} attempts")

    peak = max((r.magnitude_value for r in regions), default=0.0)
    if peak > 0.0:
        for r in regions:
            r.magnitude_value = r.magnitude_value / peak
    magnitude = np.zeros((size_ro, size_pe), dtype=np.float64)
    for r in regions:
        magnitude[r.mask] = r.magnitude_value
    return Phantom(size_ro, size_pe, regions, magnitude)
