"""Finite-window derivative estimators for noisy sampled signals.

A signal that is locally a polynomial of degree N is annihilated, up to its
n-th derivative at the window's right end, by integrating it against a
polynomial weight ``w`` on ``[0, L]``:

    y^(n)(t) ~= integral_0^L w(sigma) y(t - sigma) dsigma

``w`` is pinned down by the moment conditions

    integral_0^L sigma^j w(sigma) dsigma = (-1)^n n! [j == n],   j = 0..N

which make the estimate exact on polynomials of degree <= N.  The
integration itself is the low-pass filter that attenuates measurement noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .signal import SampledSignal

QUADRATURES = ("moment", "trapezoid", "midpoint")


class NotReady(RuntimeError):
    """The estimator window is not yet filled with samples."""


@dataclass(frozen=True)
class DerivativeKernel:
    """Polynomial weight on ``[0, window]`` estimating the ``order``-th derivative.

    ``coeffs`` are power-series coefficients in the normalised variable
    ``u = sigma / window``; the weight is ``sum(c_i u^i) / window**(order + 1)``.
    """

    order: int
    degree: int
    window: float
    coeffs: tuple[float, ...]

    @property
    def scale(self) -> float:
        return self.window ** -(self.order + 1)

    def __call__(self, sigma):
        return P.polyval(np.asarray(sigma, dtype=float) / self.window, self.coeffs) * self.scale

    def sigma_coeffs(self) -> np.ndarray:
        """Coefficients of ``w`` as a polynomial in sigma (lowest power first)."""
        c = np.asarray(self.coeffs, dtype=float)
        return c * self.scale / self.window ** np.arange(c.size)

    def moment(self, j: int) -> float:
        """Closed-form ``integral_0^L sigma^j w(sigma) dsigma``."""
        c = np.asarray(self.coeffs, dtype=float)
        i = np.arange(c.size)
        return float(np.sum(c / (i + j + 1))) * self.window ** (j + 1) * self.scale

    def l2_norm_sq(self) -> float:
        """``integral_0^L w(sigma)^2 dsigma``."""
        sq = P.polymul(self.coeffs, self.coeffs)
        return float(np.sum(sq / (np.arange(sq.size) + 1))) * self.window * self.scale**2

    def samples_in_window(self, ts: float) -> int:
        m = round(self.window / ts)
        if m < 1 or abs(m * ts - self.window) > 1e-6 * self.window:
            raise ValueError(f"window {self.window} is not a whole number of samples of {ts}")
        return m

    def grid_weights(self, ts: float, quadrature: str = "moment") -> np.ndarray:
        """Weights ``q_i`` with ``estimate = sum_i q_i y(t - i ts)``, i = 0..M.

        ``"moment"`` is the trapezoid rule plus the smallest correction that
        makes the discrete moment conditions hold exactly, so sampled
        polynomials of degree <= ``degree`` are differentiated to round-off.
        The correction is O(ts^2).
        """
        m = self.samples_in_window(ts)
        if quadrature == "moment":
            q = self.grid_weights(ts, "trapezoid")
            u = np.arange(m + 1) / m
            a = u[None, :] ** np.arange(self.degree + 1)[:, None]
            target = np.zeros(self.degree + 1)
            target[self.order] = (-1) ** self.order * math.factorial(self.order) / self.window**self.order
            if m + 1 <= self.degree:
                raise ValueError(f"{m + 1} samples cannot pin down a degree-{self.degree} estimate")
            delta, *_ = np.linalg.lstsq(a, target - a @ q, rcond=None)
            return q + delta
        if quadrature == "trapezoid":
            q = self(np.arange(m + 1) * ts) * ts
            q[0] *= 0.5
            q[-1] *= 0.5
            return self._exact_on_constants(q)
        if quadrature == "midpoint":
            mid = self((np.arange(m) + 0.5) * ts) * ts
            q = np.zeros(m + 1)
            q[:-1] += 0.5 * mid
            q[1:] += 0.5 * mid
            return self._exact_on_constants(q)
        raise ValueError(f"unknown quadrature {quadrature!r}; use one of {QUADRATURES}")

    def _exact_on_constants(self, q: np.ndarray) -> np.ndarray:
        # spread the zeroth-moment defect evenly so constants come out exact
        target = 1.0 if self.order == 0 else 0.0
        return q + (target - q.sum()) / q.size

    def cell_weights(self, ts: float) -> np.ndarray:
        """Exact integrals of ``w`` over the cells ``[i ts, (i+1) ts]``, i = 0..M-1.

        Applied to a zero-order-held input, cell ``i`` multiplies the value
        held over ``(t - (i+1) ts, t - i ts]``, i.e. the input issued at
        sample ``k - 1 - i``.
        """
        m = self.samples_in_window(ts)
        anti = P.polyint(self.coeffs)
        edges = P.polyval(np.arange(m + 1) / m, anti) * self.window * self.scale
        return np.diff(edges)


def _hilbert_solve(order: int, degree: int) -> np.ndarray:
    j = np.arange(degree + 1)
    hilbert = 1.0 / (j[:, None] + j[None, :] + 1)
    rhs = np.zeros(degree + 1)
    rhs[order] = (-1) ** order * math.factorial(order)
    return np.linalg.solve(hilbert, rhs)


def make_kernel(order: int, degree: int, window: float) -> DerivativeKernel:
    """Minimal-degree kernel exact on polynomials of degree <= ``degree``.

    In ``u = sigma / L`` the moment conditions reduce to a Hilbert system
    whose solution does not depend on ``L``.
    """
    if order < 0:
        raise ValueError("derivative order must be >= 0")
    if degree < order:
        raise ValueError(f"degree {degree} must be >= derivative order {order}")
    if not (math.isfinite(window) and window > 0):
        raise ValueError(f"window must be > 0, got {window}")
    return DerivativeKernel(order, degree, float(window), tuple(_hilbert_solve(order, degree)))


def averaging_family(nu: int, window: float) -> list[DerivativeKernel]:
    """Kernels ``W, W', ..., W^(nu)`` of the weight ``W ~ sigma^nu (L - sigma)^nu``.

    ``W`` integrates to one and vanishes with its first ``nu - 1``
    derivatives at both ends, so by parts

        integral W(sigma) y^(j)(t - sigma) = integral W^(j)(sigma) y(t - sigma)

    Every member therefore estimates its derivative with the same time
    alignment, and ``W^(nu)`` coincides with ``make_kernel(nu, nu, L)``.
    """
    if nu < 0:
        raise ValueError("nu must be >= 0")
    # u^nu (1 - u)^nu normalised by the Beta function B(nu+1, nu+1)
    base = P.polypow([0.0, 1.0], nu)
    base = P.polymul(base, P.polypow([1.0, -1.0], nu))
    base = base * math.factorial(2 * nu + 1) / math.factorial(nu) ** 2
    family = []
    c = base
    for j in range(nu + 1):
        family.append(DerivativeKernel(j, j, float(window), tuple(np.atleast_1d(c))))
        c = P.polyder(c)
    return family


class _Ring:
    """Fixed-length history stored twice so the window is one contiguous slice."""

    def __init__(self, n: int):
        self.n = n
        self.data = np.zeros(2 * n)
        self.pos = 0
        self.count = 0

    def push(self, v: float) -> None:
        self.data[self.pos] = self.data[self.pos + self.n] = v
        self.pos = (self.pos + 1) % self.n
        self.count += 1

    def window(self) -> np.ndarray:
        # oldest first
        return self.data[self.pos : self.pos + self.n]

    def clear(self) -> None:
        self.data[:] = 0.0
        self.pos = self.count = 0


class SlidingEstimator:
    """Streaming estimator: push one sample per period, read the estimate.

    The estimate at sample ``k`` only uses samples ``k - M .. k`` with
    ``M = L / ts``; ``push`` returns ``None`` until ``M + 1`` samples arrived.
    """

    def __init__(self, kernel: DerivativeKernel, ts: float, quadrature: str = "moment"):
        self.kernel = kernel
        self.ts = float(ts)
        self.quadrature = quadrature
        self.weights = kernel.grid_weights(ts, quadrature)  # newest sample first
        self._oldest_first = self.weights[::-1].copy()
        self._ring = _Ring(self.weights.size)
        self.value: float | None = None

    @property
    def ready(self) -> bool:
        return self._ring.count >= self._ring.n

    @property
    def warmup_samples(self) -> int:
        return self.weights.size - 1

    def reset(self) -> None:
        self._ring.clear()
        self.value = None

    def push(self, sample: float) -> float | None:
        self._ring.push(float(sample))
        if not self.ready:
            return None
        self.value = float(self._oldest_first @ self._ring.window())
        return self.value

    def current(self) -> float:
        if self.value is None:
            raise NotReady(f"estimator needs {self._ring.n} samples, has {self._ring.count}")
        return self.value


class HeldInputFilter:
    """Integrates a kernel against a zero-order-held input history.

    ``push(u)`` registers the value applied from the current sample on; the
    estimate aligned with sample ``k`` uses inputs ``k - M .. k - 1`` only.
    """

    def __init__(self, kernel: DerivativeKernel, ts: float):
        self.kernel = kernel
        self.weights = kernel.cell_weights(ts)  # most recent input first
        self._oldest_first = self.weights[::-1].copy()
        self._ring = _Ring(self.weights.size)

    @property
    def ready(self) -> bool:
        return self._ring.count >= self._ring.n

    def push(self, u: float) -> None:
        self._ring.push(float(u))

    def current(self) -> float:
        if not self.ready:
            raise NotReady("input history shorter than the window")
        return float(self._oldest_first @ self._ring.window())


def estimate(est: SlidingEstimator, signal: SampledSignal, t: float) -> float:
    """Evaluate the estimator's kernel on ``signal`` at grid time ``t``."""
    if not math.isclose(est.ts, signal.ts, rel_tol=1e-12):
        raise ValueError("estimator and signal sampling periods differ")
    k = signal.index_of(t)
    m = est.weights.size - 1
    if k < m:
        raise NotReady(f"t={t} is within the first window ({est.kernel.window} s) of the signal")
    window = signal.samples[k - m : k + 1][::-1]
    return float(np.dot(est.weights, window))


def estimate_series(
    kernel: DerivativeKernel,
    signal: SampledSignal,
    quadrature: str = "moment",
    fill: str = "zero",
) -> SampledSignal:
    """Apply ``kernel`` at every sample; ``valid_from`` marks the warm-up.

    Warm-up samples hold the input value (``fill="input"``) or zero.
    """
    q = kernel.grid_weights(signal.ts, quadrature)
    m = q.size - 1
    if m >= len(signal):
        raise ValueError(f"window {kernel.window} s is not shorter than the signal")
    full = np.convolve(signal.samples, q, mode="full")[: len(signal)]
    if fill == "input":
        full[:m] = signal.samples[:m]
    elif fill == "zero":
        full[:m] = 0.0
    else:
        raise ValueError(f"unknown fill {fill!r}")
    suffix = "" if kernel.order == 0 else "_d" * kernel.order
    return signal.with_samples(full, name=signal.name + (suffix or "_denoised"), valid_from=m)


def denoise(signal: SampledSignal, degree: int = 0, window: float = 0.5, quadrature: str = "moment") -> SampledSignal:
    """Smooth ``signal`` with the zeroth-derivative kernel of the given degree."""
    if window >= signal.t_end - signal.t0:
        raise ValueError("denoising window must be shorter than the signal")
    return estimate_series(make_kernel(0, degree, window), signal, quadrature, fill="input")


def kernel_table(kernel: DerivativeKernel, points: int = 101) -> list[tuple[float, float]]:
    """(sigma, weight) pairs for dumping a kernel to CSV."""
    sigma = np.linspace(0.0, kernel.window, points)
    return list(zip(sigma.tolist(), kernel(sigma).tolist()))
