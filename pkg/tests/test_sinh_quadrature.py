import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kobol_dnt.errors import GeometryError
from kobol_dnt.sinh_quadrature import (balanced_step, build_contour, build_grid, default_step,
                                       integrate, select_truncation)


def test_crossing_point_is_on_imaginary_axis():
    c = build_contour(0.1, 0.9, math.pi / 4)
    z = c(0.0)
    assert abs(z.real) < 1e-15
    assert z.imag == pytest.approx(c.crossing)
    assert c.crossing == pytest.approx(0.1 + 0.9 * math.sin(math.pi / 4))


def test_derivative_matches_finite_difference():
    c = build_contour(0.0, 1.3, -math.pi / 5)
    y, h = np.linspace(-3, 3, 7), 1e-6
    fd = (c(y + h) - c(y - h)) / (2 * h)
    assert np.max(np.abs(fd - c.derivative(y)) / np.abs(c.derivative(y))) < 1e-8


@pytest.mark.parametrize("args", [(0.0, 0.0, 0.5), (0.0, -1.0, 0.5), (0.0, 1.0, math.pi / 2),
                                  (math.nan, 1.0, 0.3)])
def test_invalid_contours_rejected(args):
    with pytest.raises(GeometryError):
        build_contour(*args)


def test_grid_is_symmetric_and_read_only():
    g = build_grid(build_contour(0.0, 0.9, math.pi / 4), 0.1, 20)
    assert g.size == 41 and g.Lambda == pytest.approx(2.0)
    assert np.allclose(g.points[::-1], -np.conj(g.points))
    with pytest.raises(ValueError):
        g.points[0] = 0


@pytest.mark.parametrize("zeta,N", [(0.0, 5), (-0.1, 5), (0.1, 0), (0.1, 2.5)])
def test_invalid_grid_rejected(zeta, N):
    with pytest.raises(GeometryError):
        build_grid(build_contour(0.0, 1.0, 0.5), zeta, N)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.3, 3.0), omega=st.floats(0.2, 1.2), b=st.floats(0.3, 1.0))
def test_fourier_integral_of_lorentzian(a, omega, b):
    # int exp(i*a*xi)/(xi^2+1) d xi = pi*exp(-a) for a > 0; the contour stays below the pole at i
    c = build_contour(0.0, b, omega)
    if c.crossing >= 1:
        return
    g = build_grid(c, 0.05, 160)
    xi = g.points
    val = integrate(g, np.exp(1j * a * xi) / (xi ** 2 + 1))
    assert abs(val - math.pi * math.exp(-a)) < 1e-9


def test_integrate_checks_length():
    g = build_grid(build_contour(0.0, 1.0, 0.5), 0.1, 10)
    with pytest.raises(ValueError):
        integrate(g, np.ones(g.size - 1))


def test_default_step_heuristic():
    z = default_step(1e-10)
    assert math.exp(-2 * math.pi * (math.pi / 10) / z) == pytest.approx(1e-11)
    with pytest.raises(ValueError):
        default_step(2.0)


def test_balanced_step_solves_balance_equation():
    N, decay, d, lp = 100, 0.7, 0.3, 1.5
    z = balanced_step(N, decay, d, lp)
    assert decay * N * z * z - lp * z - 2 * math.pi * d == pytest.approx(0.0, abs=1e-12)


def test_truncation_rule():
    c = build_contour(0.0, 0.9, math.pi / 4)
    Lam, N = select_truncation(c, offset=0.01, kappa=0.4, eps=1e-10)
    rate = 0.9 * 0.01 * 0.4 * math.sin(math.pi / 4)
    assert math.exp(-rate * math.exp(Lam)) == pytest.approx(1e-10)
    assert N * default_step(1e-10) >= Lam


def test_truncation_minimum_points_and_errors():
    c = build_contour(0.0, 0.9, math.pi / 4)
    assert select_truncation(c, offset=1e6, eps=0.5)[1] == 4
    with pytest.raises(GeometryError):
        select_truncation(c, offset=0.0)
    with pytest.raises(ValueError):
        select_truncation(c, offset=0.1, kappa=0.6)
