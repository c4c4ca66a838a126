import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from modelfree.control import (
    ConfigurationError,
    ControllerState,
    GpiState,
    IdentificationError,
    PidGains,
    UltraLocalState,
    antiwindup_update,
    broida_gains,
    broida_identify,
    classic_pid_step,
    closed_loop_poles,
    estimate_F,
    estimate_G,
    estimate_varpi,
    gpi_characteristic,
    gpi_gains,
    gpi_step,
    ipid_step,
    pole_placement_pid,
    restricted_icontroller_step,
    restricted_model_pid,
)
from modelfree.plants import build_plant, simulate_step
from modelfree.signal import SampledSignal


def fopdt_response(K, T, tau, ts=0.001, t_end=20.0):
    t = np.arange(0, t_end + ts / 2, ts)
    y = np.where(t > tau, K * (1 - np.exp(-(t - tau) / T)), 0.0)
    return SampledSignal(y, ts)


# ultra-local model ----------------------------------------------------------


def test_estimate_F_inverts_the_model():
    ul = UltraLocalState((1,), [[2.0]])
    assert estimate_F(ul, [5.0], [1.0])[0] == pytest.approx(3.0)
    assert estimate_F(ul, [5.0], [0.0])[0] == pytest.approx(5.0)


def test_estimate_F_mimo_with_filtered_inputs():
    ul = UltraLocalState((1, 2), [[1.0, 0.0], [0.0, 2.0]])
    # row j: input history filtered with output j's kernel
    f = estimate_F(ul, [1.0, 3.0], np.array([[0.5, 9.0], [9.0, 1.0]]))
    np.testing.assert_allclose(f, [0.5, 1.0])


@pytest.mark.parametrize("alpha", [[[0.0]], [[np.inf]], [[1.0, 0.0], [0.0, 0.0]]])
def test_bad_alpha_is_configuration_error(alpha):
    nu = (1,) * len(alpha)
    with pytest.raises(ConfigurationError):
        UltraLocalState(nu, alpha)


def test_bad_order_is_configuration_error():
    with pytest.raises(ConfigurationError):
        UltraLocalState((3,), [[1.0]])


def test_ipid_zero_everything():
    ul = UltraLocalState((1,), [[1.0]])
    estimate_F(ul, [0.0], [0.0])
    cs = ControllerState(PidGains(kp=2.0, ki=1.0))
    assert ipid_step(ul, cs, [0.0], [0.0])[0] == 0.0


def test_ipid_formula():
    ul = UltraLocalState((1,), [[1.0]])
    estimate_F(ul, [3.0], [0.0])
    cs = ControllerState(PidGains(kp=2.0, ki=1.0))
    assert ipid_step(ul, cs, [1.0], [0.0])[0] == pytest.approx(-2.0)


def test_ipid_needs_an_F_estimate():
    ul = UltraLocalState((1,), [[1.0]])
    with pytest.raises(RuntimeError):
        ipid_step(ul, ControllerState(PidGains(kp=1.0)), [0.0], [0.0])


def test_ipid_ignores_derivative_gain_for_nu_1():
    ul = UltraLocalState((1,), [[1.0]])
    estimate_F(ul, [0.0], [0.0])
    cs = ControllerState(PidGains(kp=1.0, kd=100.0))
    assert ipid_step(ul, cs, [0.0], [0.5], [7.0])[0] == pytest.approx(0.5)


# PID machinery --------------------------------------------------------------


def test_pid_zero_error_gives_zero():
    cs = ControllerState(PidGains(1.0, 2.0, 3.0))
    assert all(classic_pid_step(cs, 0.0, 0.01) == 0.0 for _ in range(100))


def test_integral_of_constant_error():
    cs = ControllerState(PidGains(ki=2.0))
    for _ in range(150):
        u = classic_pid_step(cs, 1.0, 0.01)
    assert u == pytest.approx(2.0 * 1.5, abs=2.0 * 0.01)


def test_pid_backward_difference_without_estimate():
    cs = ControllerState(PidGains(kd=1.0))
    classic_pid_step(cs, 0.0, 0.1)
    assert classic_pid_step(cs, 0.5, 0.1) == pytest.approx(5.0)


def test_iterated_integral_chain():
    cs = ControllerState(PidGains(ki_chain=(0.0, 1.0)))
    for _ in range(100):
        cs.advance(1.0, 0.01)
    # double integral of 1 over 1 s with the rectangle rule
    assert cs.integral_term() == pytest.approx(0.5, abs=0.01)


def test_antiwindup_never_saturated_is_transparent():
    a = ControllerState(PidGains(1.0, 1.0))
    b = ControllerState(PidGains(1.0, 1.0))
    errors = np.sin(np.arange(50))
    for e in errors:
        antiwindup_update(b, [False])
        assert classic_pid_step(a, e, 0.01) == classic_pid_step(b, e, 0.01)


def test_antiwindup_freezes_accumulator():
    cs = ControllerState(PidGains(ki=1.0))
    classic_pid_step(cs, 1.0, 0.1)
    frozen = cs.integrals.copy()
    antiwindup_update(cs, [True])
    for _ in range(7):
        classic_pid_step(cs, 1.0, 0.1)
    np.testing.assert_array_equal(cs.integrals, frozen)
    antiwindup_update(cs, [False])
    classic_pid_step(cs, 1.0, 0.1)
    assert cs.integrals[0] == pytest.approx(frozen[0] + 0.1)


def test_pole_placement_examples():
    assert pole_placement_pid(1, -1.0) == PidGains(kp=2.0, ki=1.0)
    g = pole_placement_pid(2, -3.0)
    assert (g.kd, g.kp, g.ki) == pytest.approx((9.0, 27.0, 27.0))
    g = pole_placement_pid(1, -1.0, integrators=3)
    assert g.kp == pytest.approx(4.0) and g.ki_chain == pytest.approx((6.0, 4.0, 1.0))
    with pytest.raises(ValueError):
        pole_placement_pid(1, 1.0)


@given(st.sampled_from([1, 2]), st.floats(-5.0, -0.1))
def test_pole_placement_puts_all_roots_at_pole(nu, pole):
    roots = closed_loop_poles(pole_placement_pid(nu, pole), nu)
    # a repeated root is ill-conditioned: check the polynomial instead
    np.testing.assert_allclose(np.poly(roots).real, np.poly([pole] * (nu + 1)), rtol=1e-9, atol=1e-9)


# Broida ---------------------------------------------------------------------


def test_broida_printed_gains():
    g = broida_gains(4.0, 2.018, 0.2424)
    assert (g.kp, g.ki, g.kd) == pytest.approx((1.8181, 0.7754, 0.1766), abs=5e-4)


def test_broida_unit_gains():
    g = broida_gains(1.0, 1.0, 1.0)
    assert (g.kp, g.ki, g.kd) == pytest.approx((1.1667, 0.7519, 0.35), abs=1e-4)


def test_broida_homogeneous_in_inverse_gain():
    a, b = broida_gains(2.0, 1.5, 0.3), broida_gains(4.0, 1.5, 0.3)
    assert (b.kp, b.ki, b.kd) == pytest.approx((a.kp / 2, a.ki / 2, a.kd / 2))


def test_broida_rejects_nonpositive():
    with pytest.raises(ValueError):
        broida_gains(0.0, 1.0, 1.0)


def test_broida_recovers_synthetic_fopdt():
    K, T, tau = broida_identify(fopdt_response(4.0, 2.0, 0.25), 1.0)
    assert K == pytest.approx(4.0, rel=0.02)
    assert T == pytest.approx(2.0, rel=0.02)
    assert tau == pytest.approx(0.25, rel=0.02)


def test_broida_on_stable_siso():
    plant = build_plant("stable-siso")
    x, ys = plant.initial_state(), []
    for _ in range(3000):
        ys.append(plant.measure(x, [1.0])[0])
        x = simulate_step(plant, x, [1.0], 0.01)
    K, T, tau = broida_identify(SampledSignal(ys, 0.01), 1.0)
    assert K == pytest.approx(4.0, rel=1e-6)
    assert T == pytest.approx(2.018, rel=0.1)
    assert tau == pytest.approx(0.2424, rel=0.1)


def test_broida_pure_gain_is_degenerate():
    with pytest.raises(IdentificationError):
        broida_identify(SampledSignal(np.r_[0.0, np.full(499, 3.0)], 0.01), 1.0)


def test_broida_non_settling():
    t = np.arange(1000) * 0.01
    with pytest.raises(IdentificationError):
        broida_identify(SampledSignal(t, 0.01), 1.0)


# restricted model -----------------------------------------------------------


def test_restricted_model_gains_for_spring():
    g = restricted_model_pid(0.5, 2.0)
    assert (g.kp, g.ki, g.kd) == pytest.approx((11.5, 13.5, 4.5))
    # m s^3 + Kd s^2 + (k_hat + Kp) s + Ki = m (s + 3)^3
    np.testing.assert_allclose([0.5, g.kd, 2.0 + g.kp, g.ki], 0.5 * np.poly([-3.0] * 3))


def test_known_plant_has_zero_G():
    m, k = 0.5, 3.0
    y, ydd, u = 0.2, 1.4, m * 1.4 + k * 0.2
    assert estimate_G(m, k, y, ydd, u) == pytest.approx(0.0)
    cs, ref = ControllerState(PidGains(1.0, 1.0, 1.0)), ControllerState(PidGains(1.0, 1.0, 1.0))
    out, g = restricted_icontroller_step((2.0, 0.3), (y, 0.1, ydd), cs, (m, k), u, 0.01, e_dot=0.4)
    assert g == pytest.approx(0.0, abs=1e-12)
    assert out == pytest.approx(2.0 + ref.pid(0.3 - y, 0.4, 0.01))


def test_spring_at_rest_gives_zero_input():
    cs = ControllerState(restricted_model_pid(0.5, 2.0))
    for _ in range(100):
        u, _ = restricted_icontroller_step((0.0, 0.0), (0.0, 0.0, 0.0), cs, (0.5, 2.0), 0.0, 0.01, 0.0)
        assert u == 0.0


# GPI ------------------------------------------------------------------------


@given(
    st.floats(0.5, 3.0),
    st.floats(-2.0, 2.0),
    st.floats(-2.0, 2.0),
    st.floats(-4.0, -0.3),
)
def test_gpi_gains_place_all_poles(a, b, c, pole):
    # near a pole-zero cancellation the gains blow up
    assume(min(abs(a - b), abs(a - c)) > 0.1)
    gs = gpi_gains(a, b, c, pole)
    np.testing.assert_allclose(gpi_characteristic(gs, a, b, c), np.poly([pole] * 4), rtol=1e-8, atol=1e-8)


def test_gpi_gains_reference_values():
    gs = gpi_gains(1.0, -1.0, -0.5, pole=-2.0)
    assert (gs.gamma, gs.kp, gs.ki, gs.kii) == pytest.approx((-26.0, 19.5, 35.0, 16.0))


def test_gpi_degenerate_a():
    with pytest.raises(ConfigurationError):
        gpi_gains(0.0, -1.0, -0.5)
    with pytest.raises(ConfigurationError):
        gpi_gains(1.0, 1.0, -0.5)
    with pytest.raises(ConfigurationError):
        estimate_varpi(None, (0.0, 0.0, 0.0), 0.0, 0.0, (0.0, -1.0, -0.5))


def test_gpi_on_nominal_stays_nominal():
    gs = gpi_gains(1.0, -1.0, -0.5)
    u_star = np.sin(np.arange(200) * 0.05)
    for us in u_star:
        assert gpi_step(gs, us, 0.3, 0.3, 0.01) == us


def test_gpi_reduces_to_pi_around_nominal():
    gs = GpiState(gamma=0.0, kp=2.0, ki=3.0, kii=0.0)
    ref = ControllerState(PidGains(kp=2.0, ki=3.0))
    for e in np.linspace(-1, 1, 30):
        assert gpi_step(gs, 0.7, e, 0.0, 0.01) == pytest.approx(0.7 + ref.pid(e, 0.0, 0.01))


@given(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1),
    st.sampled_from([(1.0, -1.0, -0.5), (2.0, -1.0, 1.0)]),
)
def test_varpi_exact_estimates(x1, x2, u, u_dot, varpi, abc):
    a, b, c = abc
    x2_dot = (b + c) * x2 - b * c * x1 + u + varpi
    x2_ddot = (b + c) * x2_dot - b * c * x2 + u_dot  # varpi constant
    y = x2 - a * x1
    y_dot = x2_dot - a * x2
    y_ddot = x2_ddot - a * x2_dot
    got = estimate_varpi(None, (y, y_dot, y_ddot), u, u_dot, abc)
    assert got == pytest.approx(varpi, abs=1e-9)


def test_varpi_zero_without_perturbation():
    gs = gpi_gains(1.0, -1.0, -0.5)
    x1, x2, u = 0.3, -0.2, 0.5
    x2_dot = -1.5 * x2 - 0.5 * x1 + u
    y, y_dot = x2 - x1, x2_dot - x2
    y_ddot = (-1.5 * x2_dot - 0.5 * x2) - x2_dot
    assert estimate_varpi(gs, (y, y_dot, y_ddot), u, 0.0, (1.0, -1.0, -0.5)) == pytest.approx(0.0, abs=1e-12)
    assert gs.varpi_estimate == pytest.approx(0.0, abs=1e-12)
