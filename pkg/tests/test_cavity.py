import numpy as np
import pytest
import scipy.special

from meshlessem.cavity import (
    bessel_j0,
    bessel_j0_zeros,
    bessel_j1,
    exact_ez,
    exact_ez_dr,
    exact_ez_dt,
    field_energy,
    project_initial_condition,
)

C = 2.99792458e8
R0 = 0.2


@pytest.fixture(scope="module")
def expansion():
    return project_initial_condition(R0, mode_count=160)


def test_j0_j1_against_scipy():
    x = np.concatenate([np.linspace(0.0, 11.9, 300), np.linspace(12.0, 200.0, 300)])
    assert np.allclose(bessel_j0(x), scipy.special.j0(x), rtol=0, atol=1e-10)
    assert np.allclose(bessel_j1(x), scipy.special.j1(x), rtol=0, atol=1e-10)


def test_first_zeros():
    z = bessel_j0_zeros(5)
    assert z[0] == pytest.approx(2.404825558, abs=1e-8)
    assert z[1] == pytest.approx(5.520078110, abs=1e-8)
    assert z[0] == pytest.approx(2.404826, abs=1e-5)
    # the evaluator vanishes at its own roots
    assert abs(bessel_j0(z[0])) < 1e-11


def test_zeros_against_scipy_and_spacing():
    z = bessel_j0_zeros(40)
    ref = scipy.special.jn_zeros(0, 40)
    assert np.allclose(z, ref, rtol=0, atol=1e-8)
    assert np.all(np.diff(z) > 0)
    gaps = np.diff(z)[19:]
    assert np.all(np.abs(gaps - np.pi) < 0.01)


def test_projection_reconstructs_initial_profile(expansion):
    # axis value and rim value of the parabola
    assert exact_ez(expansion, 0.0, 0.0, C) == pytest.approx(1.0, abs=1e-6)
    assert abs(exact_ez(expansion, R0, 0.0, C)) < 1e-4
    r = np.linspace(0.0, R0, 101)
    rec = exact_ez(expansion, r, 0.0, C)
    assert np.max(np.abs(rec - (1.0 - (r / R0) ** 2))) < 1e-6


def test_coefficients_decay(expansion):
    a = np.abs(expansion.coefficients)
    assert np.all(np.diff(a[2:]) < 0.0)


def test_first_coefficient_against_trapezoid_oracle(expansion):
    # independent high-resolution trapezoid quadrature of the same integrals
    j1 = expansion.zeros[0]
    s = np.linspace(0.0, 1.0, 200001)
    num = np.trapezoid((1.0 - s * s) * scipy.special.j0(j1 * s) * s, s)
    den = np.trapezoid(scipy.special.j0(j1 * s) ** 2 * s, s)
    assert expansion.coefficients[0] == pytest.approx(num / den, abs=1e-8)


def test_half_period_sign_flip(expansion):
    j1 = expansion.zeros[0]
    t_half = np.pi * R0 / (j1 * C)
    # mode 1 contribution flips sign exactly at the fundamental half period
    a1 = expansion.coefficients[0] * bessel_j0(j1 * 0.3)
    contrib0 = a1 * np.cos(0.0)
    contrib_half = a1 * np.cos(j1 * C * t_half / R0)
    assert contrib_half == pytest.approx(-contrib0, rel=1e-12)


def test_rim_value_stays_zero(expansion):
    for t in (0.0, 1e-9, 3.7e-9):
        assert abs(exact_ez(expansion, R0, t, C)) < 1e-4


def test_out_of_domain_rejected(expansion):
    with pytest.raises(ValueError):
        exact_ez(expansion, 1.1 * R0, 0.0, C)


def test_wave_equation_residual(expansion):
    # finite differences in r and t on the series; u_tt = c^2 (u_rr + u_r / r)
    rng = np.random.default_rng(1)
    # steps balance FD truncation (~step^2) against roundoff (~eps/step^2)
    omega_max = expansion.zeros[-1] * C / R0
    dt = 1e-2 / omega_max
    dr = 1e-2 * R0 / expansion.zeros[-1]
    pts_r = rng.uniform(0.1 * R0, 0.9 * R0, 100)
    pts_t = rng.uniform(0.0, 3e-9, 100)
    for r, t in zip(pts_r, pts_t):
        u_tt = (
            exact_ez(expansion, r, t + dt, C) - 2 * exact_ez(expansion, r, t, C)
            + exact_ez(expansion, r, t - dt, C)
        ) / dt**2
        u_rr = (
            exact_ez(expansion, r + dr, t, C) - 2 * exact_ez(expansion, r, t, C)
            + exact_ez(expansion, r - dr, t, C)
        ) / dr**2
        u_r = (exact_ez(expansion, r + dr, t, C) - exact_ez(expansion, r - dr, t, C)) / (2 * dr)
        lap = u_rr + u_r / r
        scale = abs(u_tt) + C**2 * abs(lap) + 1.0
        assert abs(u_tt - C**2 * lap) / scale < 1e-4


def test_energy_constant_in_time(expansion):
    t_ref = field_energy(expansion, 0.0, C)
    for t in (2.3e-10, 1.1e-9, 4.9e-9):
        assert field_energy(expansion, t, C) == pytest.approx(t_ref, rel=1e-8)


def test_derivative_evaluators_match_finite_differences(expansion):
    r, t = 0.11, 7.3e-10
    dt = 1e-14
    dr = 1e-8
    fd_t = (exact_ez(expansion, r, t + dt, C) - exact_ez(expansion, r, t - dt, C)) / (2 * dt)
    fd_r = (exact_ez(expansion, r + dr, t, C) - exact_ez(expansion, r - dr, t, C)) / (2 * dr)
    assert exact_ez_dt(expansion, r, t, C)[0] == pytest.approx(fd_t, rel=1e-5)
    assert exact_ez_dr(expansion, r, t, C)[0] == pytest.approx(fd_r, rel=1e-5)
