import math

import numpy as np
import pytest

from losp.errors import LospError
from losp.phantom import EllipseParams, OrganRegion, Phantom, generate_phantom
from losp.phase import (PhaseSpec, RegionPhase, apply_phase, coeff_index,
                        n_poly_coeffs, render_shot_phase, sample_phase_spec)


def full_image_phantom(m=16, n=16):
    mask = np.ones((m, n), dtype=bool)
    region = OrganRegion(1, mask, 1.0, EllipseParams(m / 2, n / 2, m, n, 0.0))
    return Phantom(m, n, [region], np.ones((m, n)))


def test_constant_phase():
    ph = full_image_phantom()
    spec = PhaseSpec(1, [RegionPhase(1, 0, np.array([[math.pi / 4]]))])
    field = render_shot_phase(spec, ph, 1)
    assert np.all(field == math.pi / 4)


def test_linear_phase_exact():
    ph = full_image_phantom(12, 20)
    a, b = 0.7, -1.3
    coeffs = np.zeros((1, n_poly_coeffs(1)))
    coeffs[0, coeff_index(1, 1)] = a  # x coefficient
    coeffs[0, coeff_index(1, 0)] = b  # y coefficient
    spec = PhaseSpec(1, [RegionPhase(1, 1, coeffs)])
    field = render_shot_phase(spec, ph, 1)
    xs, ys = np.meshgrid(np.linspace(-1, 1, 12), np.linspace(-1, 1, 20),
                         indexing="ij")
    assert np.allclose(field, a * xs + b * ys, atol=1e-15)


def test_region_locality():
    ph = generate_phantom(32, 32, 3, seed=5)
    spec = sample_phase_spec(ph, 2, (2, 2), 1.0, seed=9)
    base = render_shot_phase(spec, ph, 1)
    # perturb region 2's coefficients only
    for rp in spec.regions:
        if rp.region_id == 2:
            rp.coeffs = rp.coeffs + 0.5
    changed = render_shot_phase(spec, ph, 1)
    m2 = ph.region(2).mask
    assert np.array_equal(base[~m2], changed[~m2])
    assert not np.array_equal(base[m2], changed[m2])


def test_phase_zero_outside_regions():
    ph = generate_phantom(32, 32, 2, seed=4)
    spec = sample_phase_spec(ph, 1, (1, 3), 2.0, seed=1)
    field = render_shot_phase(spec, ph, 1)
    covered = np.any([r.mask for r in ph.regions], axis=0)
    assert np.all(field[~covered] == 0.0)


def test_sample_spec_counts_and_orders():
    ph = generate_phantom(32, 32, 4, seed=2)
    spec = sample_phase_spec(ph, 3, (1, 1), math.pi, seed=0)
    assert spec.n_shots == 3
    for rp in spec.regions:
        assert rp.order == 1
        assert rp.coeffs.shape == (3, 3)  # (L+1)(L+2)/2 = 3 for L=1


def test_sample_spec_order_override():
    ph = generate_phantom(32, 32, 4, seed=2)
    spec = sample_phase_spec(ph, 2, (1, 1), math.pi, seed=0,
                             order_overrides={1: (5, 5)})
    orders = {rp.region_id: rp.order for rp in spec.regions}
    assert orders[1] == 5
    assert all(v == 1 for k, v in orders.items() if k != 1)


def test_zero_coeff_scale():
    ph = generate_phantom(16, 16, 2, seed=3)
    spec = sample_phase_spec(ph, 2, (0, 4), 0.0, seed=6)
    shots = apply_phase(ph, spec).shots
    assert np.allclose(shots.imag, 0.0)
    assert np.array_equal(shots.real[0], ph.magnitude)


def test_zero_first_shot_flag():
    ph = generate_phantom(16, 16, 2, seed=3)
    spec = sample_phase_spec(ph, 2, (1, 2), 1.5, seed=6, zero_first_shot=True)
    assert np.all(render_shot_phase(spec, ph, 1) == 0.0)
    assert np.any(render_shot_phase(spec, ph, 2) != 0.0)


def test_magnitude_preserved():
    ph = generate_phantom(32, 32, 4, seed=8)
    spec = sample_phase_spec(ph, 3, (0, 5), math.pi, seed=12)
    shots = apply_phase(ph, spec).shots
    for j in range(3):
        assert np.allclose(np.abs(shots[j]), ph.magnitude, atol=1e-12)


def test_two_shot_conjugate_product():
    # shot_1 * conj(shot_2) has unit magnitude (after dividing |m|^2) and
    # phase equal to the rendered phase difference on the support
    ph = generate_phantom(32, 32, 3, seed=1)
    spec = sample_phase_spec(ph, 2, (1, 1), 2.0, seed=2)
    shots = apply_phase(ph, spec).shots
    p1 = render_shot_phase(spec, ph, 1)
    p2 = render_shot_phase(spec, ph, 2)
    support = ph.magnitude > 0
    prod = shots[0][support] * np.conj(shots[1][support])
    expected = ph.magnitude[support] ** 2 * np.exp(1j * (p1 - p2)[support])
    assert np.allclose(prod, expected, atol=1e-12)
    assert np.allclose(np.abs(prod / ph.magnitude[support] ** 2), 1.0, atol=1e-12)


def test_determinism():
    ph = generate_phantom(32, 32, 3, seed=1)
    a = sample_phase_spec(ph, 2, (0, 4), math.pi, seed=77)
    b = sample_phase_spec(ph, 2, (0, 4), math.pi, seed=77)
    for ra, rb in zip(a.regions, b.regions):
        assert ra.order == rb.order
        assert np.array_equal(ra.coeffs, rb.coeffs)


def test_unknown_region_error():
    ph = generate_phantom(16, 16, 2, seed=0)
    spec = PhaseSpec(1, [RegionPhase(9, 0, np.zeros((1, 1)))])
    with pytest.raises(LospError):
        render_shot_phase(spec, ph, 1)
    with pytest.raises(LospError):
        apply_phase(ph, spec)


def test_shot_index_bounds():
    ph = full_image_phantom()
    spec = PhaseSpec(2, [RegionPhase(1, 0, np.zeros((2, 1)))])
    with pytest.raises(LospError):
        render_shot_phase(spec, ph, 0)
    with pytest.raises(LospError):
        render_shot_phase(spec, ph, 3)


def test_phase_spec_json_roundtrip():
    ph = generate_phantom(16, 16, 3, seed=21)
    spec = sample_phase_spec(ph, 2, (0, 3), math.pi, seed=22)
    restored = PhaseSpec.from_json(spec.to_json())
    assert restored.n_shots == spec.n_shots
    for ra, rb in zip(spec.regions, restored.regions):
        assert ra.region_id == rb.region_id
        assert ra.order == rb.order
        assert np.array_equal(ra.coeffs, rb.coeffs)
