import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modelfree.traject import Bezier, Constant, Piecewise, Sine, flat_nominal_nonminphase, from_config


def test_bezier_midpoint_and_slope():
    b = Bezier(0.0, 1.0, 0.0, 1.0)
    assert b(0.5) == pytest.approx(0.5)
    assert b(0.5, 1) == pytest.approx(1.875)


def test_bezier_rest_to_rest():
    b = Bezier(-1.0, 2.0, 1.0, 3.0)
    for t in (1.0, 4.0):
        assert b(t, 1) == 0.0
        assert b(t, 2) == 0.0
    assert b(0.0) == -1.0 and b(10.0) == 2.0


def test_bezier_flat_when_levels_equal():
    b = Bezier(0.7, 0.7, 0.0, 2.0)
    t = np.linspace(-1, 3, 50)
    np.testing.assert_array_equal(b.sample(t), 0.7)
    np.testing.assert_array_equal(b.sample(t, 1), 0.0)


@pytest.mark.parametrize("duration", [0.0, -1.0])
def test_bezier_bad_duration(duration):
    with pytest.raises(ValueError):
        Bezier(0.0, 1.0, 0.0, duration)


@given(st.floats(0.01, 0.99))
def test_bezier_derivatives_are_consistent(s):
    b = Bezier(0.0, 2.0, 1.0, 2.0)
    t, h = 1.0 + 2.0 * s, 1e-5
    assert b(t, 1) == pytest.approx((b(t + h) - b(t - h)) / (2 * h), rel=1e-5, abs=1e-8)
    assert b(t, 2) == pytest.approx((b(t + h, 1) - b(t - h, 1)) / (2 * h), rel=1e-5, abs=1e-6)


def test_sine_second_derivative():
    s = Sine(0.3, 2.0)
    t = np.linspace(0, 5, 11)
    np.testing.assert_allclose(s.sample(t, 2), -0.3 * 4.0 * np.sin(2.0 * t), atol=1e-12)


def test_constant_derivatives_vanish():
    c = Constant(3.0)
    assert c(2.0) == 3.0
    assert all(c(2.0, k) == 0.0 for k in range(1, 5))


def test_order_too_high():
    with pytest.raises(ValueError):
        Bezier(0, 1, 0, 1).eval(0.5, 3)


def test_piecewise_levels():
    p = Piecewise((0.0, 0.5, -0.5, 0.0), (2.0, 7.0, 13.0), (2.0, 3.0, 2.0))
    assert p(1.0) == 0.0 and p(5.0) == pytest.approx(0.5) and p(11.0) == pytest.approx(-0.5) and p(20.0) == 0.0
    with pytest.raises(ValueError):
        Piecewise((0.0, 1.0, 0.0), (0.0, 1.0), (2.0, 1.0))


def test_from_config_round_trip():
    assert from_config({"kind": "bezier", "y_from": 0, "y_to": 1, "t_start": 1, "duration": 2}) == Bezier(0, 1, 1, 2)
    assert isinstance(from_config({"kind": "sine", "amplitude": 1, "omega": 1}), Sine)
    with pytest.raises(ValueError):
        from_config({"kind": "spline"})


def test_flat_nominal_zero_reference():
    nom = flat_nominal_nonminphase(Constant(0.0), (1.0, -1.0, -0.5), (0.0, 5.0), 0.01)
    assert np.abs(nom.z).max() == 0.0 and np.abs(nom.u).max() == 0.0


def test_flat_nominal_constant_reference():
    a, b, c = 2.0, -1.0, 1.0
    nom = flat_nominal_nonminphase(Constant(0.8), (a, b, c), (0.0, 5.0), 0.01)
    np.testing.assert_allclose(nom.z, -0.8 / a)
    np.testing.assert_allclose(nom.u, b * c * (-0.8 / a))


def test_flat_nominal_reproduces_reference():
    y_star = Bezier(0.0, 1.0, 3.0, 4.0)
    nom = flat_nominal_nonminphase(y_star, (1.0, -1.0, -0.5), (0.0, 15.0), 0.01)
    resid = np.gradient(nom.z, 0.01) - 1.0 * nom.z - nom.y
    assert np.sqrt(np.mean(resid[1:-1] ** 2)) <= 1e-4
    # z* anticipates the reference: it moves before y* does
    assert abs(nom.z[100] - nom.z[0]) > 1e-3


def test_flat_nominal_degenerate():
    with pytest.raises(ValueError):
        flat_nominal_nonminphase(Constant(1.0), (0.0, -1.0, -0.5), (0.0, 1.0), 0.01)
