"""Reference trajectories and flat-output nominals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ReferenceTrajectory:
    """Base class: ``eval(t, order)`` returns the analytic derivative."""

    kind = "abstract"
    max_derivative_order = 2

    def eval(self, t, order: int = 0):
        if order < 0 or order > self.max_derivative_order:
            raise ValueError(f"{self.kind} trajectory provides derivatives up to order {self.max_derivative_order}")
        scalar = np.ndim(t) == 0
        out = self._eval(np.asarray(t, dtype=float), order)
        return float(out) if scalar else out

    def __call__(self, t, order: int = 0):
        return self.eval(t, order)

    def sample(self, times, order: int = 0) -> np.ndarray:
        return np.asarray(self.eval(np.asarray(times, dtype=float), order), dtype=float)

    def _eval(self, t: np.ndarray, order: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(ReferenceTrajectory):
    value: float = 0.0
    kind = "constant"
    max_derivative_order = 4

    def _eval(self, t, order):
        return np.full(t.shape, self.value if order == 0 else 0.0)


# 6 s^5 - 15 s^4 + 10 s^3 and its first two derivatives, s in [0, 1]
_QUINTIC = (
    lambda s: s**3 * (10.0 + s * (-15.0 + 6.0 * s)),
    lambda s: 30.0 * s**2 * (1.0 - s) ** 2,
    lambda s: 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
)


@dataclass(frozen=True)
class Bezier(ReferenceTrajectory):
    """Rest-to-rest quintic transition from ``y_from`` to ``y_to``."""

    y_from: float
    y_to: float
    t_start: float
    duration: float
    kind = "bezier"

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"transition duration must be > 0, got {self.duration}")

    def _eval(self, t, order):
        s = np.clip((t - self.t_start) / self.duration, 0.0, 1.0)
        value = _QUINTIC[order](s) * (self.y_to - self.y_from) / self.duration**order
        if order == 0:
            return self.y_from + value
        inside = (t > self.t_start) & (t < self.t_start + self.duration)
        return np.where(inside, value, 0.0)


@dataclass(frozen=True)
class Sine(ReferenceTrajectory):
    """``offset + amplitude sin(omega (t - t_start))`` for t >= t_start, else ``offset``."""

    amplitude: float
    omega: float
    offset: float = 0.0
    t_start: float = 0.0
    kind = "sine"
    max_derivative_order = 4

    def _eval(self, t, order):
        phase = self.omega * (t - self.t_start) + order * math.pi / 2
        value = self.amplitude * self.omega**order * np.sin(phase)
        if order == 0:
            value = value + self.offset
        return np.where(t >= self.t_start, value, self.offset if order == 0 else 0.0)


@dataclass(frozen=True)
class Piecewise(ReferenceTrajectory):
    """A chain of rest-to-rest transitions through ``levels`` at ``times``.

    Transition ``i`` leaves ``levels[i]`` at ``times[i]`` and reaches
    ``levels[i + 1]`` after ``durations[i]``.
    """

    levels: tuple[float, ...]
    times: tuple[float, ...]
    durations: tuple[float, ...]
    kind = "piecewise"

    def __post_init__(self):
        if len(self.levels) != len(self.times) + 1 or len(self.times) != len(self.durations):
            raise ValueError("need len(levels) == len(times) + 1 == len(durations) + 1")
        ends = [t + d for t, d in zip(self.times, self.durations)]
        for end, nxt in zip(ends, self.times[1:]):
            if nxt < end - 1e-12:
                raise ValueError("transitions overlap")

    @property
    def segments(self) -> list[Bezier]:
        return [
            Bezier(a, b, t, d) for a, b, t, d in zip(self.levels[:-1], self.levels[1:], self.times, self.durations)
        ]

    def _eval(self, t, order):
        total = np.full(t.shape, self.levels[0] if order == 0 else 0.0)
        for seg in self.segments:
            part = seg._eval(t, order)
            total = total + (part - seg.y_from if order == 0 else part)
        return total


def bezier_transition(y_from: float, y_to: float, t_start: float, duration: float) -> Bezier:
    return Bezier(float(y_from), float(y_to), float(t_start), float(duration))


def eval(traj: ReferenceTrajectory, t, order: int = 0):  # noqa: A001 - mirrors the trajectory method
    return traj.eval(t, order)


def from_config(spec: dict) -> ReferenceTrajectory:
    """Build a trajectory from a config table with a ``kind`` key."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "constant":
        return Constant(float(spec.get("value", 0.0)))
    if kind == "bezier":
        return Bezier(
            float(spec.get("y_from", 0.0)),
            float(spec.get("y_to", 1.0)),
            float(spec.get("t_start", 0.0)),
            float(spec.get("duration", 2.0)),
        )
    if kind == "sine":
        return Sine(
            float(spec["amplitude"]),
            float(spec["omega"]),
            float(spec.get("offset", 0.0)),
            float(spec.get("t_start", 0.0)),
        )
    if kind == "piecewise":
        return Piecewise(
            tuple(float(v) for v in spec["levels"]),
            tuple(float(v) for v in spec["times"]),
            tuple(float(v) for v in spec["durations"]),
        )
    raise ValueError(f"unknown trajectory kind {kind!r}")


@dataclass(frozen=True)
class FlatNominal:
    """Sampled nominal motion of ``(s - a)/((s - b)(s - c))`` along ``y_star``."""

    times: np.ndarray
    z: np.ndarray
    z_dot: np.ndarray
    z_ddot: np.ndarray
    u: np.ndarray
    u_dot: np.ndarray
    y: np.ndarray
    y_dot: np.ndarray


def flat_nominal_nonminphase(
    y_star: ReferenceTrajectory,
    params: tuple[float, float, float],
    horizon: tuple[float, float],
    ts: float,
) -> FlatNominal:
    """Flat-output nominal for the non-minimum-phase plant.

    ``z' = a z + y*`` is integrated backwards in time (stable for ``a > 0``)
    from the steady state ``z(T) = -y*(T) / a``; then
    ``u* = z'' - (b + c) z' + b c z``.
    """
    a, b, c = params
    if a == 0:
        raise ValueError("a = 0 makes the flat-output relation degenerate")
    if a < 0:
        raise ValueError("backwards integration needs a > 0 (non-minimum-phase zero)")
    t0, t1 = horizon
    n = int(round((t1 - t0) / ts)) + 1
    times = t0 + np.arange(n) * ts
    z = np.empty(n)
    z[-1] = -y_star.eval(times[-1]) / a

    def f(tau, zz):
        return a * zz + y_star.eval(tau)

    h = -ts
    for k in range(n - 1, 0, -1):
        tk = times[k]
        zk = z[k]
        k1 = f(tk, zk)
        k2 = f(tk + h / 2, zk + h / 2 * k1)
        k3 = f(tk + h / 2, zk + h / 2 * k2)
        k4 = f(tk + h, zk + h * k3)
        z[k - 1] = zk + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    y = y_star.sample(times)
    yd = y_star.sample(times, 1)
    ydd = y_star.sample(times, 2)
    z_dot = a * z + y
    z_ddot = a * z_dot + yd
    z_dddot = a * z_ddot + ydd
    u = z_ddot - (b + c) * z_dot + b * c * z
    u_dot = z_dddot - (b + c) * z_ddot + b * c * z_dot
    return FlatNominal(times, z, z_dot, z_ddot, u, u_dot, y, yd)
