"""Half-line m-functions and the full-line resolvent kernel."""

import cmath

import pytest

from kplab.ensemble import sample
from kplab.weyl import (
    MINUS,
    PLUS,
    TruncationError,
    free_m,
    green_kernel,
    m_function,
    m_pair,
    solution_eval,
)


@pytest.fixture()
def real16(uniform_model):
    return sample(uniform_model, 13, -8, 8, stream=2)


# -- free line against closed forms ---------------------------------------------

def test_free_m_frozen():
    want = complex(-0.70710678118654752, 0.70710678118654752)
    assert free_m(1j) == pytest.approx(want, rel=1e-15)
    assert m_function(1j, None, PLUS) == pytest.approx(want, rel=1e-12)
    # the free line is reflection symmetric
    assert m_function(1j, None, MINUS) == m_function(1j, None, PLUS)


def test_free_m_other_energy():
    z = 4.0 + 0.1j
    assert m_function(z, None, MINUS) == pytest.approx(free_m(z), rel=1e-9)


def test_free_green_frozen():
    g = green_kernel(1j, None, 0.5, 0.5)
    assert g.value == pytest.approx(
        complex(-0.35355339059327376, -0.35355339059327376), rel=1e-14)


def test_free_decaying_solution_frozen():
    # f(x) = exp(i sqrt(z) (x - a)) on the plus side
    got = solution_eval(1j, None, PLUS, free_m(1j), 0.5, 1.5)
    assert got == pytest.approx(cmath.exp(1j * cmath.sqrt(1j)), rel=1e-13)


# -- structure on disorder ---------------------------------------------------------

def test_herglotz(uniform_model, two_point_model):
    for k, model in enumerate(3 * (uniform_model, two_point_model)):
        real = sample(model, 21, -64, 64, stream=k)
        z = complex(0.5 + 6.0 * k, 0.1 + 0.05 * k)
        pair = m_pair(z, real, rtol=1e-9)
        assert pair.m_plus.imag > 0.0
        assert pair.m_minus.imag > 0.0
        assert pair.stability <= 1e-9


def test_green_diagonal_is_inverse_denominator(real16):
    z = 2.5 + 0.3j
    pair = m_pair(z, real16)
    g = green_kernel(z, real16, 0.5, 0.5)
    assert g.value == pytest.approx(1.0 / pair.denominator, rel=1e-12)


def test_green_symmetric(real16):
    z = 2.5 + 0.3j
    assert green_kernel(z, real16, 1.2, 4.9).value == \
        green_kernel(z, real16, 4.9, 1.2).value


def test_green_solves_resolvent_equation(real16):
    """(z + d^2) G(., y) = 0 away from y and the lattice sites, checked by
    central differences; the kernel convention is (z - H)^{-1}."""
    z = 2.5 + 0.3j
    y, h = 3.3, 1e-3
    for x in (1.27, 5.81, -2.43):
        u = lambda t: green_kernel(z, real16, t, y).value
        lap = (u(x - h) - 2.0 * u(x) + u(x + h)) / h**2
        assert -lap == pytest.approx(z * u(x), rel=1e-5)


def test_green_derivative_jump(real16):
    # (z - H) G = delta puts a +1 kink in d/dx G(x, y) across x = y.
    z = 2.5 + 0.3j
    y, h = 3.3, 1e-3
    u = lambda t: green_kernel(z, real16, t, y).value
    jump = (u(y + h) - u(y)) / h - (u(y) - u(y - h)) / h
    assert jump == pytest.approx(1.0, abs=1e-2)


def test_window_regeneration_is_exact(uniform_model, real16):
    """A wider pre-drawn window of the same (model, seed, stream) must give
    bit-identical m-functions: extension re-draws the same couplings."""
    big = sample(uniform_model, 13, -40, 40, stream=2)
    z = 2.5 + 0.3j
    a = m_pair(z, real16)
    b = m_pair(z, big)
    assert a.m_plus == b.m_plus
    assert a.m_minus == b.m_minus


# -- certificates and failure modes -------------------------------------------------

def test_stability_certificate(real16):
    pair = m_pair(2.5 + 0.3j, real16, rtol=1e-10)
    assert pair.stability <= 1e-10
    assert pair.length >= 64


def test_truncation_error(real16):
    """Nearly real z needs a cap far beyond 256 sites; the failure must
    carry the achieved stability and the final cap distance."""
    with pytest.raises(TruncationError) as info:
        m_function(4.0 + 1e-7j, real16, PLUS, max_length=256)
    err = info.value
    assert err.length == 256
    assert err.achieved > 1e-7


def test_z_validation(real16):
    for bad in (4.0, 4.0 - 0.1j):
        with pytest.raises(ValueError):
            m_function(bad, real16, PLUS)
        with pytest.raises(ValueError):
            green_kernel(bad, real16, 0.5, 2.5)


def test_side_validation(real16):
    with pytest.raises(ValueError):
        m_function(1j, real16, "up")
    with pytest.raises(ValueError):
        solution_eval(1j, real16, "up", 0.3j, 0.5, 1.5)
