import numpy as np
import pytest

from meshlessem.boundaries import (
    HornSpec,
    PecMask,
    PmlSpec,
    SourceSpec,
    apply_pec,
    build_horn,
    build_pml_map,
    cylinder_rim_mask,
    evaluate_source,
    locate_source_node,
    pml_profile,
    rectangle_rim_mask,
    sigma_max,
)
from meshlessem.cloud import build_cylinder_cloud, build_regular_cloud
from meshlessem.constants import C0, EPS0

ALPHA = 0.7075


def test_pml_profile_zero_at_interface():
    spec = PmlSpec(thickness=0.1)
    assert pml_profile(0.0, spec) == 0.0


def test_pml_profile_peak_value():
    spec = PmlSpec(layers=10, order=3.0, target_reflection=1e-6, thickness=0.1)
    expect = -4.0 * np.log(1e-6) * EPS0 * C0 / 0.2
    assert pml_profile(1.0, spec) == pytest.approx(expect, rel=1e-12)


def test_pml_sigma_max_halves_with_double_thickness():
    spec = PmlSpec(thickness=0.1)
    assert sigma_max(spec, 0.2) == pytest.approx(0.5 * sigma_max(spec, 0.1), rel=1e-12)


def test_pml_profile_monotone():
    spec = PmlSpec(thickness=0.05)
    d = np.linspace(0, 1, 50)
    s = pml_profile(d, spec)
    assert np.all(np.diff(s) >= 0)


def test_pml_map_interior_zero():
    cloud = build_regular_cloud(40, 40, 0.01, ALPHA)
    spec = PmlSpec(layers=10)
    m = build_pml_map(cloud, spec)
    interior = (
        (cloud.e_pos[:, 0] > 0.1) & (cloud.e_pos[:, 0] < 0.3)
        & (cloud.e_pos[:, 1] > 0.1) & (cloud.e_pos[:, 1] < 0.3)
    )
    assert np.all(m.total_e[interior] == 0.0)
    assert np.any(m.total_e > 0.0)


def test_pml_spec_validation():
    with pytest.raises(ValueError):
        PmlSpec(layers=2)
    with pytest.raises(ValueError):
        PmlSpec(order=5.0)
    with pytest.raises(ValueError):
        PmlSpec(target_reflection=2.0)


def test_source_pulse_values():
    src = SourceSpec(kind="gaussian-pulse", amplitude=2.0)
    assert evaluate_source(src, 20, 1e-12) == pytest.approx(2.0)
    n_e_fold = 20 + 6 * np.sqrt(2.0)
    assert evaluate_source(src, n_e_fold, 1e-12) == pytest.approx(2.0 / np.e, rel=1e-12)
    assert evaluate_source(src, 20 - 6 * np.sqrt(2.0), 1e-12) == pytest.approx(2.0 / np.e, rel=1e-12)


def test_source_sinusoid_values():
    src = SourceSpec(kind="sinusoid", amplitude=1.0, frequency=9.84e9)
    dt = 4.23e-12
    assert evaluate_source(src, 0, dt) == 0.0
    expect = np.sin(2 * np.pi * 9.84e9 * 5 * dt)
    assert evaluate_source(src, 5, dt) == pytest.approx(expect, rel=1e-12)


def test_source_validation():
    with pytest.raises(ValueError):
        SourceSpec(kind="sinusoid")
    with pytest.raises(ValueError):
        SourceSpec(kind="gaussian-pulse", t0_steps=-1)
    with pytest.raises(ValueError):
        SourceSpec(kind="warble")


def test_locate_source_center():
    cloud = build_regular_cloud(10, 10, 0.01, ALPHA)
    idx = locate_source_node(cloud, SourceSpec(location="center"))
    assert np.allclose(cloud.e_pos[idx], [0.055, 0.055])
    idx2 = locate_source_node(cloud, SourceSpec(location=(0.031, 0.012)))
    assert np.allclose(cloud.e_pos[idx2], [0.035, 0.015])
    assert locate_source_node(cloud, SourceSpec(location=7)) == 7


def test_apply_pec():
    ez = np.arange(6, dtype=float)
    assert np.array_equal(apply_pec(ez.copy(), None), ez)
    empty = PecMask(np.array([], dtype=int))
    assert np.array_equal(apply_pec(ez.copy(), empty), ez)
    full = PecMask(np.arange(6))
    assert np.all(apply_pec(ez.copy(), full) == 0.0)


def test_rectangle_rim_mask():
    cloud = build_regular_cloud(6, 6, 1.0, ALPHA)
    mask = rectangle_rim_mask(cloud)
    assert mask.size == 6 * 6 - 4 * 4
    lat = cloud.e_lattice[mask.e_indices]
    assert np.all((lat == 0).any(axis=1) | (lat == 5).any(axis=1))


def test_cylinder_rim_mask():
    cloud = build_cylinder_cloud(0.2, 10, ALPHA)
    mask = cylinder_rim_mask(cloud)
    r = np.linalg.norm(cloud.e_pos[mask.e_indices], axis=1)
    assert np.all(r >= 0.2 - 0.5 * cloud.dr)
    assert 0 < mask.size < cloud.n_e


def test_horn_geometry():
    cloud = build_regular_cloud(100, 100, 0.0025, ALPHA)
    pec, src, axis = build_horn(cloud, HornSpec())
    assert pec.size > 50
    assert len(src) >= 8  # column spanning the guide interior
    assert len(axis) > 60
    # source column sits strictly between the plates
    ys = cloud.e_pos[src, 1]
    assert ys.max() - ys.min() < 0.025
    # axis is sorted by x and excludes PEC nodes
    xs = cloud.e_pos[axis, 0]
    assert np.all(np.diff(xs) > 0)
    assert not np.intersect1d(axis, pec.e_indices).size
