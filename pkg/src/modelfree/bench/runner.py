"""Closed-loop scenario runner, run artifacts and side-by-side comparison."""
from __future__ import annotations

import csv
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..control import ConfigurationError
from ..plants import SimulationDiverged, clamp, simulate_step
from ..signal import SampledSignal, TrackingMetrics, default_window, noise_generator, tracking_metrics, write_csv
from .config import ScenarioConfig
from .loops import _names, make_loop


@dataclass
class RunArtifact:
    """Traces, metrics and metadata of one run.

    ``diverged_at`` is set when the plant state blew up; traces then stop at
    the last finite sample.
    """

    config: ScenarioConfig
    traces: dict[str, SampledSignal]
    metrics: dict[str, TrackingMetrics]
    metadata: dict[str, str] = field(default_factory=dict)
    diverged_at: float | None = None

    @property
    def ok(self) -> bool:
        return self.diverged_at is None

    @property
    def rms(self) -> float:
        """RMS tracking error pooled over the controlled outputs."""
        if not self.metrics:
            return float("inf")
        return float(np.sqrt(np.mean([m.rms_error**2 for m in self.metrics.values()])))

    def write(self, out_dir: str | Path) -> Path:
        """One CSV per trace, ``metrics.csv`` and ``metadata.txt`` under ``out_dir``."""
        run_dir = Path(out_dir) / self.config.name.replace(":", "-").replace("/", "-")
        run_dir.mkdir(parents=True, exist_ok=True)
        for name, sig in self.traces.items():
            write_csv(run_dir / f"{name}.csv", [sig])
        with open(run_dir / "metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["output", "rms_error", "max_abs_error", "window_start", "window_end"])
            for name, m in self.metrics.items():
                writer.writerow([name, repr(m.rms_error), repr(m.max_abs_error), *map(repr, m.eval_window)])
        with open(run_dir / "metadata.txt", "w") as fh:
            for key, value in self.metadata.items():
                fh.write(f"{key}: {value}\n")
        return run_dir


def reference_table(cfg: ScenarioConfig, times: np.ndarray) -> np.ndarray:
    refs = np.zeros((len(cfg.trajectories), 3, times.size))
    for j, traj in enumerate(cfg.trajectories):
        for order in range(3):
            refs[j, order] = traj.sample(times, order)
    return refs


def run_scenario(cfg: ScenarioConfig) -> RunArtifact:
    """Simulate the closed loop sample by sample.

    Per sample: measure, add noise, let the loop estimate and compute ``u``,
    clamp, hold ``u`` over the period while the plant integrates.
    """
    plant = cfg.build_plant()
    n = cfg.steps
    ts = cfg.ts
    times = np.arange(n) * ts
    refs = reference_table(cfg, times)
    loop = make_loop(cfg, plant, refs)
    outputs = cfg.controller.outputs
    p, m = len(outputs), plant.input_dim

    if cfg.noise.active:
        sigma = float(np.sqrt(cfg.noise.variance))
        noise = noise_generator(cfg.noise).normal(0.0, sigma, size=(n, plant.output_dim))
    else:
        noise = np.zeros((n, plant.output_dim))

    y_true = np.zeros((n, plant.output_dim))
    y_meas = np.zeros((n, plant.output_dim))
    u_log = np.zeros((n, m))
    freeze = np.zeros(n)
    tele_log = {name: np.zeros(n) for name in loop.telemetry}

    x = plant.initial_state()
    u_prev = np.array(cfg.controller.u_init, dtype=float)
    diverged_at = None
    count = 0
    for k in range(n):
        t = times[k]
        y = plant.measure(x, u_prev)
        y_true[k] = y
        y_meas[k] = y + noise[k]
        u_des, tele = loop.step(k, y_meas[k])
        if u_des is None:
            hold = loop.nominal_input(k)
            u_des = np.array(cfg.controller.u_init, dtype=float) if hold is None else hold
        u, saturated = clamp(u_des, u_prev, plant.constraints, ts)
        loop.applied(u, saturated)
        u_log[k] = u
        freeze[k] = float(np.any(saturated))
        for name, value in tele.items():
            tele_log[name][k] = value
        count = k + 1
        try:
            x = simulate_step(plant, x, u, ts, t)
        except SimulationDiverged as exc:
            diverged_at = exc.t
            break
        if not np.all(np.isfinite(u)) or np.max(np.abs(x)) > cfg.divergence_bound:
            diverged_at = t + ts
            break
        u_prev = u

    def sig(values, name):
        return SampledSignal(np.nan_to_num(values[:count]), ts, 0.0, name)

    traces: dict[str, SampledSignal] = {}
    for j, name in enumerate(_names("y", plant.output_dim)):
        traces[name] = sig(y_true[:, j], name)
        traces[f"{name}_meas"] = sig(y_meas[:, j], f"{name}_meas")
    ref_names = _names("y_ref", p)
    for j, name in enumerate(ref_names):
        traces[name] = sig(refs[j, 0], name)
    for i, name in enumerate(_names("u", m)):
        traces[name] = sig(u_log[:, i], name)
    traces["saturated"] = sig(freeze, "saturated")
    for name, values in tele_log.items():
        traces[name] = sig(values, name)

    metrics = {}
    if count:
        window = default_window(0.0, (count - 1) * ts, cfg.metrics_fraction)
        for j, out in enumerate(outputs):
            y_name = _names("y", plant.output_dim)[out]
            metrics[y_name] = tracking_metrics(traces[y_name], traces[ref_names[j]], window)
    elif diverged_at is None:
        # a zero-length run has nothing to evaluate
        tracking_metrics(sig(y_true[:, 0], "y"), sig(refs[0, 0], "y_ref"))

    metadata = {
        "label": cfg.label,
        "variant": cfg.variant or "-",
        "figure": cfg.figure,
        "description": cfg.description,
        "plant": cfg.plant,
        "controller": cfg.controller.variant,
        "config_sha256": cfg.config_hash(),
        "seed": str(cfg.noise.seed),
        "noise_variance": repr(cfg.noise.variance),
        "ts": repr(ts),
        "duration": repr(cfg.duration),
        "status": "ok" if diverged_at is None else f"diverged at t={diverged_at:.6g}",
        "modelfree": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }
    return RunArtifact(cfg, traces, metrics, metadata, diverged_at)


@dataclass(frozen=True)
class Comparison:
    names: tuple[str, ...]
    artifacts: tuple[RunArtifact, ...]
    ratios: np.ndarray  # ratios[i, j] = rms_i / rms_j

    def rows(self) -> list[tuple[str, float, float, bool]]:
        return [
            (name, a.rms, max((m.max_abs_error for m in a.metrics.values()), default=float("inf")), a.ok)
            for name, a in zip(self.names, self.artifacts)
        ]

    def ratio(self, a: str, b: str) -> float:
        return float(self.ratios[self.names.index(a), self.names.index(b)])

    def format(self) -> str:
        lines = [f"{'run':<40} {'rms':>12} {'max':>12}  status"]
        for name, rms, peak, ok in self.rows():
            lines.append(f"{name:<40} {rms:12.6g} {peak:12.6g}  {'ok' if ok else 'diverged'}")
        lines.append("")
        lines.append("rms ratios (row / column)")
        lines.append(" " * 40 + "".join(f"{j:>12}" for j in range(len(self.names))))
        for i, name in enumerate(self.names):
            lines.append(f"{i}: {name:<37}" + "".join(f"{r:12.4g}" for r in self.ratios[i]))
        return "\n".join(lines)


def _comparable_key(cfg: ScenarioConfig):
    return (cfg.plant, sorted(cfg.plant_params.items()), [repr(t) for t in cfg.trajectories], cfg.ts, cfg.duration)


def compare(configs: list[ScenarioConfig]) -> Comparison:
    """Run every config and tabulate pairwise rms ratios."""
    if len(configs) < 2:
        raise ConfigurationError("compare needs at least two configs")
    key = _comparable_key(configs[0])
    for cfg in configs[1:]:
        if _comparable_key(cfg) != key:
            raise ConfigurationError(f"{cfg.name} does not share plant and trajectory with {configs[0].name}")
    artifacts = tuple(run_scenario(c) for c in configs)
    rms = np.array([a.rms for a in artifacts])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = rms[:, None] / rms[None, :]
    ratios[np.isnan(ratios)] = 1.0  # 0/0 and inf/inf: equal performance
    names = tuple(c.name for c in configs)
    return Comparison(names, artifacts, ratios)
