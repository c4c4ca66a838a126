import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from modelfree.algdiff import (
    HeldInputFilter,
    NotReady,
    SlidingEstimator,
    averaging_family,
    denoise,
    estimate,
    estimate_series,
    make_kernel,
)
from modelfree.signal import NoiseSpec, SampledSignal, add_noise


def sympy_kernel(n, N, L):
    """Brute-force oracle: solve the moment conditions symbolically."""
    s = sp.symbols("s")
    c = sp.symbols(f"c0:{N + 1}")
    w = sum(ci * s**i for i, ci in enumerate(c))
    eqs = [
        sp.integrate(s**j * w, (s, 0, L)) - (sp.Integer(-1) ** n * sp.factorial(n) if j == n else 0)
        for j in range(N + 1)
    ]
    sol = sp.solve(eqs, c)
    return sp.Poly(w.subs(sol), s).all_coeffs()[::-1], s


def poly_signal(coeffs, n=400, ts=0.01):
    t = np.arange(n) * ts
    return SampledSignal(np.polyval(coeffs[::-1], t), ts)


@pytest.mark.parametrize("n,N", [(0, 0), (0, 2), (1, 1), (1, 3), (2, 2), (2, 4), (3, 4)])
@pytest.mark.parametrize("L", [sp.Rational(1, 2), sp.Integer(1)])
def test_kernel_matches_symbolic_moment_solve(n, N, L):
    expected, _ = sympy_kernel(n, N, L)
    k = make_kernel(n, N, float(L))
    got = k.sigma_coeffs()
    expected = np.array([float(e) for e in expected] + [0.0] * (got.size - len(expected)))
    np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-9 * np.abs(expected).max())


def test_moving_average_kernel():
    k = make_kernel(0, 0, 0.4)
    assert k(np.array([0.0, 0.2, 0.4])) == pytest.approx([2.5, 2.5, 2.5])


@pytest.mark.parametrize("n,N", [(1, 0), (-1, 2)])
def test_bad_orders(n, N):
    with pytest.raises(ValueError):
        make_kernel(n, N, 0.5)


@pytest.mark.parametrize("L", [0.0, -1.0])
def test_bad_window(L):
    with pytest.raises(ValueError):
        make_kernel(1, 1, L)


def test_moments_closed_form():
    k = make_kernel(2, 3, 0.7)
    assert [k.moment(j) for j in range(4)] == pytest.approx([0.0, 0.0, 2.0, 0.0], abs=1e-9)


def test_constant_any_quadrature():
    s = SampledSignal(np.full(100, 4.2), 0.01)
    for q in ("moment", "trapezoid", "midpoint"):
        est = SlidingEstimator(make_kernel(0, 2, 0.3), 0.01, q)
        assert estimate(est, s, 0.5) == pytest.approx(4.2, rel=1e-9)


def test_linear_slope():
    t = np.arange(200) * 0.01
    y = SampledSignal(3 * t + 1, 0.01)
    est = SlidingEstimator(make_kernel(1, 1, 0.5), 0.01)
    assert abs(estimate(est, y, 1.5) - 3.0) <= 1e-6 * np.abs(y.samples).max()


def test_second_derivative_of_square():
    t = np.arange(300) * 0.01
    y = SampledSignal(t**2, 0.01)
    est = SlidingEstimator(make_kernel(2, 2, 0.5), 0.01)
    assert estimate(est, y, 2.0) == pytest.approx(2.0, rel=1e-3)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=5),
    st.sampled_from([0.1, 0.5, 1.0]),
)
def test_exact_on_polynomials(coeffs, L):
    N = len(coeffs) - 1
    c = np.array(coeffs[::-1])
    sig = poly_signal(np.array(coeffs), n=300)
    t = 2.5
    for n in range(N + 1):
        est = SlidingEstimator(make_kernel(n, N, L), 0.01)
        d = np.polyder(c, n)
        truth = np.polyval(d, t)
        scale = max(1.0, np.abs(np.polyval(d, np.linspace(t - L, t, 11))).max())
        assert abs(estimate(est, sig, t) - truth) <= 1e-6 * scale


def test_trapezoid_converges_at_second_order():
    k = make_kernel(1, 2, 0.5)
    errs = []
    for ts in (0.01, 0.005):
        t = np.arange(int(round(3 / ts)) + 1) * ts
        sig = SampledSignal(t**2, ts)
        errs.append(abs(estimate(SlidingEstimator(k, ts, "trapezoid"), sig, 2.0) - 4.0))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_estimator_not_ready_until_window_full():
    est = SlidingEstimator(make_kernel(1, 1, 0.05), 0.01)
    assert est.warmup_samples == 5
    for k in range(5):
        assert est.push(float(k)) is None
        with pytest.raises(NotReady):
            est.current()
    assert est.push(5.0) == pytest.approx(100.0)
    est.reset()
    assert not est.ready


def test_streaming_matches_batch():
    rng = np.random.default_rng(0)
    sig = SampledSignal(rng.normal(size=500), 0.01)
    k = make_kernel(1, 2, 0.3)
    batch = estimate_series(k, sig)
    est = SlidingEstimator(k, 0.01)
    stream = [est.push(v) for v in sig.samples]
    m = batch.valid_from
    np.testing.assert_allclose(stream[m:], batch.samples[m:], rtol=1e-12, atol=1e-12)
    assert all(v is None for v in stream[:m])


def test_window_not_multiple_of_ts():
    with pytest.raises(ValueError):
        SlidingEstimator(make_kernel(0, 0, 0.055), 0.01)


def test_estimate_inside_first_window_is_not_ready():
    sig = SampledSignal(np.zeros(100), 0.01)
    with pytest.raises(NotReady):
        estimate(SlidingEstimator(make_kernel(0, 0, 0.5), 0.01), sig, 0.3)


def test_denoise_constant_plus_noise():
    clean = SampledSignal(np.full(2000, 5.0), 0.01)
    noisy = add_noise(clean, NoiseSpec("gaussian-white", 0.01, seed=11))
    out = denoise(noisy, degree=0, window=0.5)
    resid = out.samples[out.valid_from :] - 5.0
    assert resid.std() <= 0.1 / math.sqrt(50) * 3


def test_denoise_polynomial_exact():
    sig = poly_signal(np.array([1.0, -2.0, 0.5]))
    out = denoise(sig, degree=2, window=0.5)
    m = out.valid_from
    np.testing.assert_allclose(out.samples[m:], sig.samples[m:], rtol=1e-9, atol=1e-9)


def test_denoise_window_longer_than_signal():
    with pytest.raises(ValueError):
        denoise(SampledSignal(np.zeros(10), 0.01), window=0.5)


def test_noise_attenuation_bound():
    # Var of the n = 0 estimate on white noise equals sigma^2 ts int w^2 up to quadrature
    k = make_kernel(0, 1, 0.5)
    rng = np.random.default_rng(5)
    sig = SampledSignal(rng.normal(0.0, 0.1, 200_000), 0.01)
    out = estimate_series(k, sig)
    var = out.samples[out.valid_from :].var()
    bound = 0.01 * 0.01 * k.l2_norm_sq()
    assert var <= bound * 1.05


def test_oracle_least_squares_fit():
    # Both the kernel and a local LS fit reproduce degree-N polynomials
    t = np.arange(400) * 0.01
    y = np.sin(t)
    sig = SampledSignal(y, 0.01)
    L, N = 0.5, 2
    est = SlidingEstimator(make_kernel(1, N, L), 0.01)
    t0 = 3.0
    k = sig.index_of(t0)
    win = t[k - 50 : k + 1] - t0
    fit = np.polyfit(win, y[k - 50 : k + 1], N)
    ls = np.polyval(np.polyder(fit), 0.0)
    assert estimate(est, sig, t0) == pytest.approx(ls, rel=1e-2)


@pytest.mark.parametrize("nu", [1, 2, 3])
def test_averaging_family_consistent(nu):
    fam = averaging_family(nu, 0.8)
    assert fam[0].moment(0) == pytest.approx(1.0)
    top = make_kernel(nu, nu, 0.8)
    np.testing.assert_allclose(fam[-1].sigma_coeffs()[: nu + 1], top.sigma_coeffs(), rtol=1e-9)
    # every member sees the same average: W^(j) applied to y equals W applied to y^(j)
    sig = poly_signal(np.array([0.3, -1.0, 0.7, 0.2]), n=300)
    c = np.array([0.3, -1.0, 0.7, 0.2])
    for j, k in enumerate(fam):
        est = SlidingEstimator(k, 0.01)
        d = np.polyder(c[::-1], j)
        direct = SampledSignal(np.polyval(d, np.arange(300) * 0.01), 0.01)
        ref = estimate(SlidingEstimator(fam[0], 0.01), direct, 2.0)
        # equal in continuous time; the two quadratures differ by O(ts^2)
        assert estimate(est, sig, 2.0) == pytest.approx(ref, rel=1e-4, abs=1e-9)


def test_held_input_filter_exact_on_steps():
    k = averaging_family(1, 0.1)[0]
    f = HeldInputFilter(k, 0.01)
    for _ in range(9):
        f.push(2.0)
        with pytest.raises(NotReady):
            f.current()
    f.push(2.0)
    assert f.current() == pytest.approx(2.0)
    # newest input carries the weight of the most recent cell
    f.push(3.0)
    assert f.current() == pytest.approx(2.0 + f.weights[0])
