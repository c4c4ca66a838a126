"""Per-variant closed-loop logic: estimators in, control value out.

Every loop sees the measurement of sample ``k`` through ``step`` and the
input actually applied at ``k`` (after clamping) through ``applied``.  A
loop returns ``None`` from ``step`` while its estimators warm up; the
runner then holds the initial input.
"""
from __future__ import annotations

import numpy as np

from ..algdiff import HeldInputFilter, SlidingEstimator, averaging_family, make_kernel
from ..control import (
    ControllerState,
    UltraLocalState,
    antiwindup_update,
    classic_pid_step,
    estimate_F,
    estimate_varpi,
    gpi_gains,
    gpi_step,
    gpi_u_dot,
    ipid_step,
    restricted_icontroller_step,
)
from ..plants import PlantModel
from ..traject import flat_nominal_nonminphase
from .config import ScenarioConfig


class OutputEstimators:
    """Estimators attached to one measured output.

    ``family[j]`` estimates the j-th derivative with a common time alignment,
    ``denoised`` feeds the tracking error and ``slope`` its derivative.
    """

    def __init__(self, cfg: ScenarioConfig, nu: int):
        w = cfg.windows
        window = w.first if nu == 1 else w.second
        kernels = averaging_family(nu, window)
        self.family = [SlidingEstimator(k, cfg.ts, w.quadrature) for k in kernels]
        self.denoiser = SlidingEstimator(make_kernel(0, w.denoise_degree, w.denoise), cfg.ts, w.quadrature)
        self.slope = SlidingEstimator(make_kernel(1, 1, w.first), cfg.ts, w.quadrature)
        self._all = self.family + [self.denoiser, self.slope]

    def push(self, y: float) -> None:
        for est in self._all:
            est.push(y)

    @property
    def ready(self) -> bool:
        return all(est.ready for est in self._all)

    def derivative(self, order: int) -> float:
        return self.family[order].current()


class Loop:
    telemetry: tuple[str, ...] = ()

    def __init__(self, cfg: ScenarioConfig, plant: PlantModel, refs: np.ndarray):
        self.cfg = cfg
        self.plant = plant
        self.ts = cfg.ts
        self.refs = refs  # (outputs, 3, steps): y*, y*', y*''
        self.spec = cfg.controller

    def step(self, k: int, y_meas: np.ndarray):
        raise NotImplementedError

    def applied(self, u: np.ndarray, saturated: np.ndarray) -> None:
        pass

    def nominal_input(self, k: int) -> np.ndarray | None:
        """Open-loop input to hold during warm-up, if the loop has one."""
        return None


class IntelligentLoop(Loop):
    """i-P(I)(D) on the ultra-local model, SISO or square MIMO."""

    def __init__(self, cfg, plant, refs):
        super().__init__(cfg, plant, refs)
        s = self.spec
        self.ul = UltraLocalState(s.nu, s.alpha_matrix)
        self.states = [ControllerState(g) for g in s.gains]
        self.est = [OutputEstimators(cfg, n) for n in s.nu]
        m = plant.input_dim
        self.u_filters = [[HeldInputFilter(e.family[0].kernel, cfg.ts) for _ in range(m)] for e in self.est]
        self.u_last = np.array(s.u_init, dtype=float)
        p = len(s.outputs)
        self.telemetry = tuple(_names("F", p) + _names("e", p) + _names("y_denoised", p))

    def step(self, k, y_meas):
        s = self.spec
        for j, out in enumerate(s.outputs):
            self.est[j].push(y_meas[out])
        if not all(e.ready for e in self.est) or not self.u_filters[0][0].ready:
            return None, {}
        y_deriv = [e.derivative(n) for e, n in zip(self.est, s.nu)]
        if s.alignment == "matched":
            u_side = np.array([[f.current() for f in row] for row in self.u_filters])
        else:
            u_side = self.u_last
        estimate_F(self.ul, y_deriv, u_side)
        if s.ignore_f:
            self.ul.f_estimate[:] = 0.0
        y_den = np.array([e.denoiser.current() for e in self.est])
        slope = np.array([e.slope.current() for e in self.est])
        p = len(s.outputs)
        r = self.refs[:, :, k]
        e = r[:, 0] - y_den
        e_dot = r[:, 1] - slope
        ref_nu = np.array([r[j, s.nu[j]] for j in range(p)])
        u = ipid_step(self.ul, self.states, ref_nu, e, e_dot, self.ts)
        tele = dict(zip(self.telemetry, np.concatenate([self.ul.f_estimate, e, y_den])))
        return u, tele

    def applied(self, u, saturated):
        for row in self.u_filters:
            for f, ui in zip(row, u):
                f.push(ui)
        self.u_last = np.array(u, dtype=float)
        if self.spec.antiwindup:
            for cs, sat in zip(self.states, saturated):
                antiwindup_update(cs, sat)


class PidLoop(Loop):
    """Classic PID on a low-pass filtered output, one loop per channel."""

    def __init__(self, cfg, plant, refs):
        super().__init__(cfg, plant, refs)
        s = self.spec
        self.states = [ControllerState(g) for g in s.gains]
        kernel = make_kernel(1, 1, cfg.windows.first)
        self.slopes = [SlidingEstimator(kernel, cfg.ts, cfg.windows.quadrature) for _ in s.outputs]
        self.filtered: np.ndarray | None = None
        self.gain = cfg.ts / (s.lowpass_tau + cfg.ts)
        p = len(s.outputs)
        self.telemetry = tuple(_names("e", p) + _names("y_denoised", p))

    def step(self, k, y_meas):
        s = self.spec
        y = np.array([y_meas[o] for o in s.outputs])
        if self.filtered is None:
            self.filtered = y.copy()
        else:
            self.filtered += self.gain * (y - self.filtered)
        r = self.refs[:, :, k]
        e = r[:, 0] - self.filtered
        u = np.empty(len(s.outputs))
        for j, (cs, est) in enumerate(zip(self.states, self.slopes)):
            slope = est.push(y[j])
            e_dot = None if slope is None else r[j, 1] - slope
            u[j] = classic_pid_step(cs, e[j], self.ts, e_dot)
        return u, dict(zip(self.telemetry, np.concatenate([e, self.filtered])))

    def applied(self, u, saturated):
        if self.spec.antiwindup:
            for cs, sat in zip(self.states, saturated):
                antiwindup_update(cs, sat)


class RestrictedLoop(Loop):
    """``u = u* - [G]_e + PID(e)`` around ``m y'' + k_hat y = u``.

    With ``estimate_g = false`` the loop is flatness-based feedforward plus PID.
    """

    telemetry = ("G", "e", "y_denoised")

    def __init__(self, cfg, plant, refs):
        super().__init__(cfg, plant, refs)
        s = self.spec
        self.cs = ControllerState(s.gains[0])
        self.est = OutputEstimators(cfg, 2)
        self.u_filter = HeldInputFilter(self.est.family[0].kernel, cfg.ts)
        self.u_last = float(s.u_init[0])

    def step(self, k, y_meas):
        s = self.spec
        self.est.push(y_meas[s.outputs[0]])
        if not (self.est.ready and self.u_filter.ready):
            return None, {}
        r = self.refs[0, :, k]
        u_star = s.mass * r[2] + s.k_hat * r[0]
        y_den = self.est.denoiser.current()
        e_dot = r[1] - self.est.slope.current()
        u_side = self.u_filter.current() if s.alignment == "matched" else self.u_last
        # [G]_e uses the aligned family, e the short-window denoised output
        estimates = (self.est.derivative(0), self.est.slope.current(), self.est.derivative(2))
        if s.estimate_g:
            u, g = restricted_icontroller_step(
                (u_star, r[0]), estimates, self.cs, (s.mass, s.k_hat), u_side, self.ts, e_dot, r[0] - y_den
            )
        else:
            g = 0.0
            u = u_star + self.cs.pid(r[0] - y_den, e_dot, self.ts)
        return np.array([u]), {"G": g, "e": r[0] - y_den, "y_denoised": y_den}

    def applied(self, u, saturated):
        self.u_filter.push(u[0])
        self.u_last = float(u[0])
        if self.spec.antiwindup:
            antiwindup_update(self.cs, saturated[0])


class GpiLoop(Loop):
    """GPI tracking of the flat nominal, optionally compensating ``[varpi]_e``."""

    telemetry = ("varpi", "e", "y_denoised", "u_star", "z_star")

    def __init__(self, cfg, plant, refs):
        super().__init__(cfg, plant, refs)
        s = self.spec
        p = plant.params
        self.abc = (p["a"], p["b"], p["c"])
        n = cfg.steps
        self.nominal = flat_nominal_nonminphase(cfg.trajectories[0], self.abc, (0.0, n * cfg.ts), cfg.ts)
        self.gs = gpi_gains(*self.abc, pole=s.pole)
        self.est = OutputEstimators(cfg, 2)
        kernels = [f.kernel for f in self.est.family]
        self.u_avg = HeldInputFilter(kernels[0], cfg.ts)
        self.u_der = HeldInputFilter(kernels[1], cfg.ts)
        self.u_last = float(s.u_init[0])
        self.u_star_last = 0.0
        self.varpi_smooth: float | None = None

    def nominal_input(self, k):
        return np.array([self.nominal.u[k]])

    def step(self, k, y_meas):
        s = self.spec
        self.est.push(y_meas[s.outputs[0]])
        if not self.est.denoiser.ready:
            return None, {}
        y_den = self.est.denoiser.current()
        y_star, y_star_dot = self.refs[0, 0, k], self.refs[0, 1, k]
        u_star = self.nominal.u[k]
        varpi = 0.0
        if self.est.ready and self.u_avg.ready:
            estimates = tuple(self.est.derivative(j) for j in range(3))
            if s.alignment == "matched":
                u_side, u_dot = self.u_avg.current(), self.u_der.current()
            else:
                u_side = self.u_last
                u_dot = gpi_u_dot(
                    self.gs, self.nominal.u_dot[k], self.u_last, self.u_star_last,
                    self.est.slope.current(), y_star_dot, y_den, y_star, self.gs.int_e,
                )
            varpi = estimate_varpi(self.gs, estimates, u_side, u_dot, self.abc)
            if s.varpi_tau > 0:
                if self.varpi_smooth is None:
                    self.varpi_smooth = varpi
                else:
                    self.varpi_smooth += self.ts / (s.varpi_tau + self.ts) * (varpi - self.varpi_smooth)
                varpi = self.varpi_smooth
        u_target = u_star - varpi if s.compensate else u_star
        u = gpi_step(self.gs, u_target, y_den, y_star, self.ts)
        self.u_star_last = u_target
        tele = {"varpi": varpi, "e": y_star - y_den, "y_denoised": y_den, "u_star": u_star, "z_star": self.nominal.z[k]}
        return np.array([u]), tele

    def applied(self, u, saturated):
        self.u_avg.push(u[0])
        self.u_der.push(u[0])
        self.u_last = float(u[0])


LOOPS = {"ipid": IntelligentLoop, "pid": PidLoop, "restricted": RestrictedLoop, "gpi": GpiLoop}


def make_loop(cfg: ScenarioConfig, plant: PlantModel, refs: np.ndarray) -> Loop:
    return LOOPS[cfg.controller.variant](cfg, plant, refs)


def _names(base: str, count: int) -> list[str]:
    return [base] if count == 1 else [f"{base}{j + 1}" for j in range(count)]
