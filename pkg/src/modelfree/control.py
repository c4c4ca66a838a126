"""Controllers over an ultra-local model, classic PID baselines and GPI control.

Sign convention: unless a function says otherwise the tracking error is
``e = y* - y``, so positive gains give stable loops.  The GPI law keeps the
printed ``y - y*`` form; its gains come from pole placement either way.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signal import SampledSignal


class ConfigurationError(ValueError):
    pass


class IdentificationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# ultra-local model


@dataclass
class UltraLocalState:
    """``y_j^(nu_j) = F_j + sum_i alpha[j, i] u_i`` with F re-estimated every sample."""

    nu: tuple[int, ...]
    alpha: np.ndarray
    f_estimate: np.ndarray = None
    ready: bool = False

    def __post_init__(self):
        self.nu = tuple(int(n) for n in np.atleast_1d(self.nu))
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        p, m = self.alpha.shape
        if len(self.nu) != p:
            raise ConfigurationError(f"{len(self.nu)} derivation orders for {p} outputs")
        if any(n not in (1, 2) for n in self.nu):
            raise ConfigurationError(f"derivation orders must be 1 or 2, got {self.nu}")
        if not np.all(np.isfinite(self.alpha)):
            raise ConfigurationError("alpha must be finite")
        if p != m:
            raise ConfigurationError("the ultra-local law needs a square alpha")
        if np.any(np.diag(self.alpha) == 0) or abs(np.linalg.det(self.alpha)) < 1e-300:
            raise ConfigurationError("alpha must be invertible with a nonzero diagonal")
        if self.f_estimate is None:
            self.f_estimate = np.zeros(p)

    @property
    def outputs(self) -> int:
        return len(self.nu)


def estimate_F(ul: UltraLocalState, y_deriv_est, u_prev) -> np.ndarray:
    """``F_j = [y_j^(nu_j)]_e - sum_i alpha[j, i] u_i``.

    ``u_prev`` is the input side of the estimate: the vector applied at the
    previous sample, or a ``(p, m)`` array of past applied inputs averaged
    with each output's own kernel.
    Never the input being computed, so there is no algebraic loop.
    """
    y_deriv = np.atleast_1d(np.asarray(y_deriv_est, dtype=float))
    u = np.asarray(u_prev, dtype=float)
    if u.ndim == 2:
        # row j holds the input history filtered by output j's own kernel
        ul.f_estimate = y_deriv - np.sum(ul.alpha * u, axis=1)
    else:
        ul.f_estimate = y_deriv - ul.alpha @ np.atleast_1d(u)
    ul.ready = True
    return ul.f_estimate


# ---------------------------------------------------------------------------
# PID machinery


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    ki_chain: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.ki_chain is not None:
            chain = tuple(float(k) for k in self.ki_chain)
            object.__setattr__(self, "ki_chain", chain)
            if chain and chain[-1] == 0:
                raise ConfigurationError("the last iterated-integral gain must be nonzero")

    @property
    def integral_gains(self) -> tuple[float, ...]:
        return self.ki_chain if self.ki_chain is not None else (self.ki,)


@dataclass
class ControllerState:
    gains: PidGains
    integrals: np.ndarray = None
    freeze: bool = False
    last_error: float | None = None

    def __post_init__(self):
        if self.integrals is None:
            self.integrals = np.zeros(len(self.gains.integral_gains))

    def reset(self) -> None:
        self.integrals = np.zeros(len(self.gains.integral_gains))
        self.freeze = False
        self.last_error = None

    def advance(self, e: float, ts: float) -> None:
        """Rectangle rule on the chain of iterated integrals, unless frozen."""
        if self.freeze:
            return
        lower = e
        for i in range(self.integrals.size):
            self.integrals[i] += lower * ts
            lower = self.integrals[i]

    def integral_term(self) -> float:
        return float(np.dot(self.gains.integral_gains, self.integrals))

    def pid(self, e: float, e_dot: float | None, ts: float) -> float:
        """Advance the integrals with ``e`` and return ``Kp e + sum Ki_l I_l + Kd e'``.

        Without a supplied ``e_dot`` the derivative is a backward difference.
        """
        self.advance(e, ts)
        if e_dot is None:
            e_dot = 0.0 if self.last_error is None else (e - self.last_error) / ts
        self.last_error = e
        g = self.gains
        return g.kp * e + self.integral_term() + g.kd * e_dot


def antiwindup_update(cs: ControllerState, saturated) -> None:
    """Freeze the integrals for the next sample while the actuator saturates."""
    cs.freeze = bool(np.any(saturated))


def ipid_step(
    ul: UltraLocalState,
    cs: list[ControllerState] | ControllerState,
    y_ref_deriv,
    e,
    e_dot_est=None,
    ts: float = 0.01,
) -> np.ndarray:
    """Intelligent P(I)(D) law on the current F estimate.

    Solves ``alpha u = -F + y*^(nu) + PID(e)`` channel by channel; for
    ``nu = 1`` the derivative gain is not used.  Closed around the exact
    ultra-local model the error obeys ``e^(nu) + Kd e' + Kp e + Ki int e = 0``.
    """
    if not ul.ready:
        raise RuntimeError("F estimate not available yet")
    states = cs if isinstance(cs, (list, tuple)) else [cs]
    e = np.atleast_1d(np.asarray(e, dtype=float))
    ref = np.atleast_1d(np.asarray(y_ref_deriv, dtype=float))
    if e_dot_est is None:
        e_dot = [None] * len(states)
    else:
        e_dot = list(np.atleast_1d(np.asarray(e_dot_est, dtype=float)))
    v = np.empty(len(states))
    for j, state in enumerate(states):
        # no derivative action on a first-order local model
        ed = e_dot[j] if ul.nu[j] == 2 else 0.0
        fb = state.pid(float(e[j]), ed, ts)
        v[j] = -ul.f_estimate[j] + ref[j] + fb
    return np.linalg.solve(ul.alpha, v)


def classic_pid_step(cs: ControllerState, e: float, ts: float, e_dot: float | None = None) -> float:
    """``u = Kp e + Ki int e + Kd e'``."""
    return cs.pid(float(e), e_dot, ts)


# ---------------------------------------------------------------------------
# Broida identification and tuning


def broida_identify(step_response: SampledSignal, u_step: float, t_step: float | None = None) -> tuple[float, float, float]:
    """First-order-plus-delay fit ``K e^{-tau s}/(T s + 1)`` of a step response.

    Uses the 28% and 40% crossing times ``t1, t2`` after the step:
    ``T = 5.5 (t2 - t1)``, ``tau = 2.8 t1 - 1.8 t2``.
    """
    if u_step == 0:
        raise IdentificationError("step amplitude must be nonzero")
    y = step_response.samples
    t = step_response.times
    if t_step is None:
        t_step = step_response.t0
    if y.size < 10:
        raise IdentificationError("step response too short")
    y0 = y[0]
    tail = y[-max(1, y.size // 10) :]
    y_final = float(tail[-1])
    dy = y_final - y0
    if dy == 0 or not np.all(np.abs(tail - y_final) <= 0.01 * abs(dy)):
        raise IdentificationError("step response does not settle")

    def crossing(frac: float) -> float:
        level = y0 + frac * dy
        progress = (y - level) * np.sign(dy)
        idx = int(np.argmax(progress >= 0))
        if progress[idx] < 0:
            raise IdentificationError(f"response never reaches {frac:.0%}")
        if idx == 0:
            return t[0]
        ya, yb = y[idx - 1], y[idx]
        return t[idx - 1] + (level - ya) / (yb - ya) * (t[idx] - t[idx - 1])

    t1 = crossing(0.28) - t_step
    t2 = crossing(0.40) - t_step
    K = dy / u_step
    T = 5.5 * (t2 - t1)
    tau = 2.8 * t1 - 1.8 * t2
    if T < 2 * step_response.ts or tau <= 0:
        raise IdentificationError(f"degenerate fit T={T:.3g}, tau={tau:.3g}")
    return float(K), float(T), float(tau)


def broida_gains(K: float, T: float, tau: float) -> PidGains:
    if K <= 0 or T <= 0 or tau <= 0:
        raise ValueError("Broida tuning needs K, T, tau > 0")
    return PidGains(
        kp=100 * (0.4 * tau + T) / (120 * K * tau),
        ki=1 / (1.33 * K * tau),
        kd=0.35 * T / K,
    )


def pole_placement_pid(nu: int, pole: float, integrators: int = 1) -> PidGains:
    """Gains placing every root of the error equation at ``pole`` (< 0).

    nu = 1: ``s^(L+1) + Kp s^L + Ki_1 s^(L-1) + ... + Ki_L``;
    nu = 2 adds ``Kd`` one power higher.  ``L = integrators`` iterated
    integrals; more than one yields a ``ki_chain``.
    """
    p = -pole
    if p <= 0:
        raise ValueError("pole must be negative")
    if nu not in (1, 2):
        raise ValueError("nu must be 1 or 2")
    if integrators < 0:
        raise ValueError("integrators must be >= 0")
    # coefficients of (s + p)^(order), highest power first, leading 1 dropped
    order = nu + integrators
    coeffs = np.poly([pole] * order)[1:]
    if nu == 2:
        kd, kp, integral = coeffs[0], coeffs[1], coeffs[2:]
    else:
        kd, kp, integral = 0.0, coeffs[0], coeffs[1:]
    if integrators == 0:
        return PidGains(kp=float(kp), kd=float(kd))
    if integrators == 1:
        return PidGains(kp=float(kp), ki=float(integral[0]), kd=float(kd))
    return PidGains(kp=float(kp), kd=float(kd), ki_chain=tuple(float(k) for k in integral))


def restricted_model_pid(m: float, k_hat: float, pole: float = -3.0) -> PidGains:
    """PID for ``m y'' = -k_hat y + u`` with all closed-loop poles at ``pole``.

    ``m s^3 + Kd s^2 + (k_hat + Kp) s + Ki = m (s - pole)^3``.
    """
    p = -pole
    return PidGains(kp=3 * m * p**2 - k_hat, ki=m * p**3, kd=3 * m * p)


# ---------------------------------------------------------------------------
# control with a restricted model


def estimate_G(m: float, k_hat: float, y_est: float, ydd_est: float, u_prev: float) -> float:
    """``[G]_e = m [y'']_e + k_hat [y]_e - u``: everything the model leaves out."""
    return m * ydd_est + k_hat * y_est - u_prev


def restricted_icontroller_step(
    nominal: tuple[float, float],
    estimates: tuple[float, float, float],
    pid: ControllerState,
    plant_constants: tuple[float, float],
    u_prev: float,
    ts: float,
    e_dot: float | None = None,
    e: float | None = None,
) -> tuple[float, float]:
    """``u = u* - [G]_e + PID(e)``, returning ``(u, [G]_e)``.

    ``nominal`` is ``(u*, y*)`` with ``u* = m y*'' + k_hat y*``; ``estimates``
    is ``([y]_e, [y']_e, [y'']_e)``.  ``u_prev`` enters ``[G]_e`` only.
    ``e`` defaults to ``y* - [y]_e``; pass it to use a differently filtered output.
    """
    u_star, y_star = nominal
    y_e, yd_e, ydd_e = estimates
    m, k_hat = plant_constants
    g = estimate_G(m, k_hat, y_e, ydd_e, u_prev)
    if e is None:
        e = y_star - y_e
    return u_star - g + pid.pid(e, e_dot, ts), g


# ---------------------------------------------------------------------------
# GPI control of the non-minimum-phase plant


@dataclass
class GpiState:
    """Coefficients of ``u = u* + gamma int(u - u*) + Kp e + Ki int e + Kii iint e``,
    ``e = y - y*``, plus the running accumulators."""

    gamma: float
    kp: float
    ki: float
    kii: float
    int_u_diff: float = 0.0
    int_e: float = 0.0
    int_int_e: float = 0.0
    varpi_estimate: float = 0.0
    last_u_diff: float = field(default=0.0, repr=False)

    def reset(self) -> None:
        self.int_u_diff = self.int_e = self.int_int_e = 0.0
        self.varpi_estimate = 0.0
        self.last_u_diff = 0.0


def gpi_gains(a: float, b: float, c: float, pole: float = -3.0) -> GpiState:
    """Place the four roots of the GPI error dynamics at ``pole``.

    With ``p(s) = s^2 - (b + c) s + bc`` and ``eps = z - z*`` the closed loop is
    ``s (s - gamma) p(s) - (s - a)(Kp s^2 + Ki s + Kii) = 0``.
    """
    if a == 0:
        raise ConfigurationError("a = 0 degenerates the flat-output relation")
    if abs((a - b) * (a - c)) < 1e-9:
        raise ConfigurationError("the zero at s = a cancels a pole; the gains are not assignable")
    p1, p0 = -(b + c), b * c
    target = np.poly([pole] * 4)  # s^4 + t3 s^3 + t2 s^2 + t1 s + t0
    t3, t2, t1, t0 = target[1:]
    kii = t0 / a
    # unknowns (gamma, kp, ki), coefficients of s^3, s^2, s
    lhs = np.array(
        [
            [-1.0, -1.0, 0.0],
            [-p1, a, -1.0],
            [-p0, 0.0, a],
        ]
    )
    rhs = np.array([t3 - p1, t2 - p0, t1 + kii])
    gamma, kp, ki = np.linalg.solve(lhs, rhs)
    return GpiState(float(gamma), float(kp), float(ki), float(kii))


def gpi_characteristic(gs: GpiState, a: float, b: float, c: float) -> np.ndarray:
    """Coefficients (highest first) of the closed-loop characteristic polynomial."""
    p = np.array([1.0, -(b + c), b * c])
    left = np.polymul(np.polymul([1.0, 0.0], [1.0, -gs.gamma]), p)
    right = np.polymul([1.0, -a], [gs.kp, gs.ki, gs.kii])
    return np.polysub(left, right)


def gpi_step(gs: GpiState, u_star: float, y: float, y_star: float, ts: float) -> float:
    """One sample of the GPI law.

    The ``int(u - u*)`` accumulator is advanced with the deviation of the
    previous sample, which keeps the law explicit.
    """
    e = y - y_star
    gs.int_u_diff += gs.last_u_diff * ts
    gs.int_e += e * ts
    gs.int_int_e += gs.int_e * ts
    u = u_star + gs.gamma * gs.int_u_diff + gs.kp * e + gs.ki * gs.int_e + gs.kii * gs.int_int_e
    gs.last_u_diff = u - u_star
    return u


def gpi_u_dot(
    gs: GpiState,
    u_star_dot: float,
    u: float,
    u_star: float,
    y_dot_est: float,
    y_star_dot: float,
    y_est: float,
    y_star: float,
    int_y_err: float,
) -> float:
    """Time derivative of the GPI law evaluated on estimates."""
    return (
        u_star_dot
        + gs.gamma * (u - u_star)
        + gs.kp * (y_dot_est - y_star_dot)
        + gs.ki * (y_est - y_star)
        + gs.kii * int_y_err
    )


def estimate_varpi(
    gs: GpiState | None,
    estimates: tuple[float, float, float],
    u: float,
    u_dot: float,
    params: tuple[float, float, float],
) -> float:
    """``[varpi]_e = -(([y'']_e - (b + c)[y']_e + bc [y]_e - [u']_e)/a + u)``."""
    a, b, c = params
    if a == 0:
        raise ConfigurationError("a = 0 degenerates the flat-output relation")
    y_e, yd_e, ydd_e = estimates
    varpi = -((ydd_e - (b + c) * yd_e + b * c * y_e - u_dot) / a + u)
    if gs is not None:
        gs.varpi_estimate = varpi
    return varpi


def closed_loop_poles(gains: PidGains, nu: int) -> np.ndarray:
    """Roots of the error equation of an i-PI (nu=1) or i-PID (nu=2)."""
    if nu == 1:
        return np.roots([1.0, gains.kp, gains.ki])
    return np.roots([1.0, gains.kd, gains.kp, gains.ki])

