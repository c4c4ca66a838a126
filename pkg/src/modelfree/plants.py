"""Benchmark plants, zero-order-hold simulation and actuator limits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

Vector = np.ndarray


class SimulationDiverged(RuntimeError):
    def __init__(self, t: float, message: str = "state became non-finite"):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t


@dataclass(frozen=True)
class ActuatorConstraints:
    u_min: tuple[float, ...]
    u_max: tuple[float, ...]
    du_min: tuple[float, ...]
    du_max: tuple[float, ...]

    def __post_init__(self):
        n = len(self.u_min)
        if not (len(self.u_max) == len(self.du_min) == len(self.du_max) == n):
            raise ValueError("constraint vectors must share one length")
        for lo, hi in zip(self.u_min, self.u_max):
            if lo > hi:
                raise ValueError(f"u_min {lo} > u_max {hi}")
        for lo, hi in zip(self.du_min, self.du_max):
            if lo > hi:
                raise ValueError(f"du_min {lo} > du_max {hi}")

    @classmethod
    def unbounded(cls, m: int = 1) -> "ActuatorConstraints":
        inf = (math.inf,) * m
        return cls((-math.inf,) * m, inf, (-math.inf,) * m, inf)

    @classmethod
    def bounds(cls, lo, hi, rate_lo=-math.inf, rate_hi=math.inf, m: int = 1) -> "ActuatorConstraints":
        def vec(v):
            return tuple(float(x) for x in np.broadcast_to(v, (m,)))

        return cls(vec(lo), vec(hi), vec(rate_lo), vec(rate_hi))

    @property
    def is_unbounded(self) -> bool:
        return all(math.isinf(v) for v in self.u_min + self.u_max + self.du_min + self.du_max)


@dataclass(frozen=True)
class FaultSpec:
    """Actuator fault.  ``gain-loss`` scales the applied input by ``factor``
    from ``t_onset`` on; ``param-shift`` faults are baked into the plant."""

    kind: str = "none"
    factor: float = 1.0
    t_onset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gain-loss", "param-shift"):
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if not 0 < self.factor <= 1:
            raise ValueError(f"gain-loss factor must be in (0, 1], got {self.factor}")
        if self.t_onset < 0:
            raise ValueError("fault onset must be >= 0")

    def input_gain(self, t: float) -> float:
        if self.kind == "gain-loss" and t >= self.t_onset - 1e-12:
            return self.factor
        return 1.0


@dataclass(frozen=True)
class PlantModel:
    """Continuous-time plant ``dx/dt = rhs(x, u, t, du)``, ``y = output(x, u)``.

    Plants with ``input_rate`` need the derivative of the held input; they
    keep the previously applied input in their last ``input_dim`` state
    components and ``simulate_step`` feeds the backward difference as ``du``.
    """

    label: str
    state_dim: int
    input_dim: int
    output_dim: int
    rhs: Callable[..., Vector]
    output: Callable[[Vector, Vector], Vector]
    x0: tuple[float, ...]
    constraints: ActuatorConstraints
    fault: FaultSpec = FaultSpec()
    params: dict = field(default_factory=dict)
    input_rate: bool = False
    description: str = ""

    def initial_state(self) -> Vector:
        return np.array(self.x0, dtype=float)

    def measure(self, x: Vector, u: Vector) -> Vector:
        return np.asarray(self.output(x, u), dtype=float)

    def with_fault(self, fault: FaultSpec) -> "PlantModel":
        return replace(self, fault=fault)


# ---------------------------------------------------------------------------
# linear plants


def tf_to_ss(num, den):
    """Controllable canonical realisation of ``num(s) / den(s)``.

    Coefficients are highest power first.  Returns ``(A, B, C, D)`` with B a
    column vector and C a row vector.
    """
    num = np.atleast_1d(np.asarray(num, dtype=float))
    den = np.atleast_1d(np.asarray(den, dtype=float))
    num = np.trim_zeros(num, "f")
    if den[0] == 0:
        raise ValueError("leading denominator coefficient must be nonzero")
    num = num / den[0]
    den = den / den[0]
    n = den.size - 1
    if num.size > n + 1:
        raise ValueError("transfer function must be proper")
    d = 0.0
    if num.size == n + 1:
        d = num[0]
        num = num[1:] - d * den[1:]
    num = np.concatenate([np.zeros(n - num.size), num])
    a = np.zeros((n, n))
    if n > 1:
        a[:-1, 1:] = np.eye(n - 1)
    a[-1, :] = -den[1:][::-1]
    b = np.zeros((n, 1))
    b[-1, 0] = 1.0
    c = num[::-1].reshape(1, n)
    return a, b, c, np.array([[d]])


def poly_from_roots(roots) -> np.ndarray:
    return np.real(np.poly(roots))


@dataclass(frozen=True)
class LinearSystem:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def rhs(self, x, u, t=0.0, du=None):
        return self.a @ x + self.b @ u

    def output(self, x, u):
        return self.c @ x + self.d @ u

    def dc_gain(self) -> np.ndarray:
        return self.d - self.c @ np.linalg.solve(self.a, self.b)


def block_system(blocks, n_in: int, n_out: int) -> LinearSystem:
    """Sum SISO blocks ``(ss, input_index, output_index)`` into one MIMO system."""
    n = sum(blk[0][0].shape[0] for blk in blocks)
    a = np.zeros((n, n))
    b = np.zeros((n, n_in))
    c = np.zeros((n_out, n))
    d = np.zeros((n_out, n_in))
    k = 0
    for (ai, bi, ci, di), i_in, i_out in blocks:
        ni = ai.shape[0]
        a[k : k + ni, k : k + ni] = ai
        b[k : k + ni, i_in] = bi[:, 0]
        c[i_out, k : k + ni] = ci[0]
        d[i_out, i_in] += di[0, 0]
        k += ni
    return LinearSystem(a, b, c, d)


def _linear_plant(label, sys: LinearSystem, description, **params) -> PlantModel:
    n_out, n_in = sys.d.shape
    return PlantModel(
        label=label,
        state_dim=sys.a.shape[0],
        input_dim=n_in,
        output_dim=n_out,
        rhs=sys.rhs,
        output=sys.output,
        x0=(0.0,) * sys.a.shape[0],
        constraints=ActuatorConstraints.unbounded(n_in),
        params={"system": sys, **params},
        description=description,
    )


def stable_siso(pole: float = 1.0) -> PlantModel:
    num = np.polymul([1.0, 2.0], [1.0, 2.0])
    den = poly_from_roots([-pole] * 3)
    label = "stable-siso" if pole == 1.0 else "stable-siso-aged"
    return _linear_plant(
        label,
        LinearSystem(*tf_to_ss(num, den)),
        f"(s+2)^2/(s+{pole:g})^3",
        pole=pole,
    )


def large_spectrum() -> PlantModel:
    num = [1.0, 0, 0, 0, 0, 0]
    den = poly_from_roots([-1.0, -0.1, -0.01, 0.05, 0.5, 5.0])
    return _linear_plant(
        "large-spectrum",
        LinearSystem(*tf_to_ss(num, den)),
        "s^5/((s+1)(s+0.1)(s+0.01)(s-0.05)(s-0.5)(s-5))",
    )


def mimo_2x2() -> PlantModel:
    # G11 = s^3/((s+0.01)(s+0.1)(s-1)s): the pole at 0 cancels one zero
    g11 = tf_to_ss([1.0, 0.0, 0.0], poly_from_roots([-0.01, -0.1, 1.0]))
    g21 = tf_to_ss([1.0, 1.0], poly_from_roots([-0.003, 0.03, -0.3, -3.0]))
    g22 = tf_to_ss([1.0, 0.0, 0.0], poly_from_roots([-0.004, -0.04, 0.4, -4.0]))
    sys = block_system([(g11, 0, 0), (g21, 0, 1), (g22, 1, 1)], n_in=2, n_out=2)
    return _linear_plant("mimo-2x2", sys, "2x2 transfer matrix with unstable poles 1, 0.03, 0.4")


# ---------------------------------------------------------------------------
# nonlinear plants


def cubic_unstable(y0: float = 0.0) -> PlantModel:
    def rhs(x, u, t=0.0, du=None):
        return np.array([x[0] + u[0] ** 3])

    return PlantModel(
        label="cubic-unstable",
        state_dim=1,
        input_dim=1,
        output_dim=1,
        rhs=rhs,
        output=lambda x, u: x[:1].copy(),
        x0=(y0,),
        constraints=ActuatorConstraints.unbounded(1),
        description="dy/dt = y + u^3",
    )


def ball_beam(B: float = 0.7143, G: float = 9.81) -> PlantModel:
    """ydd = B y thetad^2 - B G sin(theta), state (y, yd, theta_prev)."""

    def rhs(x, u, t=0.0, du=None):
        rate = 0.0 if du is None else du[0]
        return np.array([x[1], B * x[0] * rate**2 - B * G * math.sin(u[0]), 0.0])

    return PlantModel(
        label="ball-beam",
        state_dim=3,
        input_dim=1,
        output_dim=1,
        rhs=rhs,
        output=lambda x, u: x[:1].copy(),
        x0=(0.0, 0.0, 0.0),
        constraints=ActuatorConstraints.bounds(-math.pi / 3, math.pi / 3, -math.pi, math.pi),
        params={"B": B, "G": G},
        input_rate=True,
        description="ball and beam, beam angle as input",
    )


def _signed_sqrt(v: float) -> float:
    if v > 0:
        return math.sqrt(v)
    if v < 0:
        return -math.sqrt(-v)
    return 0.0


def three_tanks(
    S: float = 0.0154,
    Sp: float = 5e-5,
    g: float = 9.81,
    mu=(0.5, 0.675, 0.5),
    x0=(0.0, 0.0, 0.0),
) -> PlantModel:
    c1, c2, c3 = (m * Sp * math.sqrt(2 * g) / S for m in mu)

    def rhs(x, u, t=0.0, du=None):
        q13 = c1 * _signed_sqrt(x[0] - x[2])
        q32 = c3 * _signed_sqrt(x[2] - x[1])
        q20 = c2 * _signed_sqrt(x[1])
        return np.array([-q13 + u[0] / S, q32 - q20 + u[1] / S, q13 - q32])

    return PlantModel(
        label="three-tanks",
        state_dim=3,
        input_dim=2,
        output_dim=3,
        rhs=rhs,
        output=lambda x, u: x.copy(),
        x0=tuple(x0),
        constraints=ActuatorConstraints.unbounded(2),
        params={"S": S, "Sp": Sp, "g": g, "mu": tuple(mu), "C": (c1, c2, c3)},
        description="three coupled tanks, pump flows into tanks 1 and 2",
    )


def tustin_friction(v: float, fc: float = 0.5, fs: float = 1.0, vs: float = 0.1) -> float:
    if v == 0:
        return 0.0
    return -math.copysign(fc + (fs - fc) * math.exp(-abs(v) / vs), v)


def spring(
    m: float = 0.5,
    k1: float = 3.0,
    k3: float = 10.0,
    d: float = 5.0,
    fc: float = 0.5,
    fs: float = 1.0,
    vs: float = 0.1,
) -> PlantModel:
    """m ydd = -(k1 y + k3 y^3) + F_tustin(yd) - d yd + u."""

    def rhs(x, u, t=0.0, du=None):
        y, v = x
        force = -(k1 * y + k3 * y**3) + tustin_friction(v, fc, fs, vs) - d * v + u[0]
        return np.array([v, force / m])

    return PlantModel(
        label="spring",
        state_dim=2,
        input_dim=1,
        output_dim=1,
        rhs=rhs,
        output=lambda x, u: x[:1].copy(),
        x0=(0.0, 0.0),
        constraints=ActuatorConstraints.unbounded(1),
        params={"m": m, "k1": k1, "k3": k3, "d": d, "fc": fc, "fs": fs, "vs": vs},
        description="mass on a Duffing spring with damping and Tustin friction",
    )


def nonmin_phase(a: float = 1.0, b: float = -1.0, c: float = -0.5, perturbation: str = "none", varpi: float = 0.0) -> PlantModel:
    """x1' = x2, x2' = (b+c) x2 - bc x1 + u + varpi, y = x2 - a x1.

    ``perturbation`` is ``"none"``, ``"constant"`` (varpi fixed) or
    ``"speed"`` (varpi times dy/dt).
    """
    if perturbation not in ("none", "constant", "speed"):
        raise ValueError(f"unknown perturbation {perturbation!r}")

    def unmodelled(x, u):
        if perturbation == "constant":
            return varpi
        if perturbation == "speed":
            # dy/dt = x2' - a x2, and x2' itself contains varpi
            base = (b + c) * x[1] - b * c * x[0] + u[0]
            return varpi * (base - a * x[1]) / (1.0 - varpi)
        return 0.0

    def rhs(x, u, t=0.0, du=None):
        w = unmodelled(x, u)
        return np.array([x[1], (b + c) * x[1] - b * c * x[0] + u[0] + w])

    return PlantModel(
        label="nonmin-phase",
        state_dim=2,
        input_dim=1,
        output_dim=1,
        rhs=rhs,
        output=lambda x, u: np.array([x[1] - a * x[0]]),
        x0=(0.0, 0.0),
        constraints=ActuatorConstraints.unbounded(1),
        params={"a": a, "b": b, "c": c, "perturbation": perturbation, "varpi": varpi, "unmodelled": unmodelled},
        description=f"(s-{a:g})/((s-{b:g})(s-{c:g}))",
    )


def double_integrator_synthetic(f0: float = 1.0, alpha: float = 1.0) -> PlantModel:
    """ydd = f0 + alpha u: an ultra-local model that holds exactly."""

    def rhs(x, u, t=0.0, du=None):
        return np.array([x[1], f0 + alpha * u[0]])

    return PlantModel(
        label="synthetic-nu2",
        state_dim=2,
        input_dim=1,
        output_dim=1,
        rhs=rhs,
        output=lambda x, u: x[:1].copy(),
        x0=(0.0, 0.0),
        constraints=ActuatorConstraints.unbounded(1),
        params={"f0": f0, "alpha": alpha},
        description="ydd = F0 + alpha u",
    )


PLANTS: dict[str, Callable[..., PlantModel]] = {
    "stable-siso": lambda: stable_siso(1.0),
    "stable-siso-aged": lambda pole=1.5: stable_siso(pole),
    "stable-siso-fault": lambda factor=0.5, t_onset=0.0: stable_siso(1.0).with_fault(
        FaultSpec("gain-loss", factor, t_onset)
    ),
    "large-spectrum": large_spectrum,
    "mimo-2x2": mimo_2x2,
    "cubic-unstable": cubic_unstable,
    "ball-beam": ball_beam,
    "three-tanks": three_tanks,
    "spring": spring,
    "nonmin-phase": nonmin_phase,
    "synthetic-nu2": double_integrator_synthetic,
}


def build_plant(scenario: str, **overrides) -> PlantModel:
    """Instantiate a catalogue plant; keyword overrides replace parameters."""
    try:
        factory = PLANTS[scenario]
    except KeyError:
        raise ValueError(f"unknown plant {scenario!r}; known: {', '.join(PLANTS)}") from None
    plant = factory(**overrides)
    if scenario == "stable-siso-fault":
        return replace(plant, label=scenario)
    return plant


# ---------------------------------------------------------------------------
# simulation


def _rate(plant: PlantModel, x: Vector, u: Vector, ts: float):
    if not plant.input_rate:
        return None
    prev = x[plant.state_dim - plant.input_dim :]
    return (u - prev) / ts


def simulate_step(plant: PlantModel, x: Vector, u_held, ts: float, t: float = 0.0, n_sub: int = 4) -> Vector:
    """Advance ``x`` by one sampling period under the held input (RK4)."""
    if ts <= 0:
        raise ValueError("ts must be > 0")
    if n_sub < 4:
        raise ValueError("at least 4 RK4 substeps per period")
    u = np.asarray(u_held, dtype=float).reshape(plant.input_dim) * plant.fault.input_gain(t)
    du = _rate(plant, x, np.asarray(u_held, dtype=float).reshape(plant.input_dim), ts)
    f = plant.rhs
    h = ts / n_sub
    x = np.array(x, dtype=float)
    tau = t
    for _ in range(n_sub):
        k1 = f(x, u, tau, du)
        k2 = f(x + 0.5 * h * k1, u, tau + 0.5 * h, du)
        k3 = f(x + 0.5 * h * k2, u, tau + 0.5 * h, du)
        k4 = f(x + h * k3, u, tau + h, du)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tau += h
    if plant.input_rate:
        x[plant.state_dim - plant.input_dim :] = np.asarray(u_held, dtype=float).reshape(plant.input_dim)
    if not np.all(np.isfinite(x)):
        raise SimulationDiverged(t + ts)
    return x


def clamp(u_desired, u_prev, constraints: ActuatorConstraints, ts: float):
    """Rate-limit against ``u_prev`` then clamp to the bounds.

    Returns ``(u_applied, saturated)`` with one flag per channel.
    """
    if ts <= 0:
        raise ValueError("ts must be > 0")
    u = np.array(u_desired, dtype=float).reshape(-1)
    prev = np.array(u_prev, dtype=float).reshape(-1)
    lo_rate = prev + np.asarray(constraints.du_min) * ts
    hi_rate = prev + np.asarray(constraints.du_max) * ts
    limited = np.minimum(np.maximum(u, lo_rate), hi_rate)
    applied = np.minimum(np.maximum(limited, constraints.u_min), constraints.u_max)
    return applied, applied != u
