"""Scenario configuration: TOML files, variants and command-line overrides."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .. import traject
from ..control import ConfigurationError, PidGains, pole_placement_pid, restricted_model_pid
from ..plants import PLANTS, ActuatorConstraints, FaultSpec, PlantModel, build_plant
from ..signal import NoiseSpec

SCENARIO_DIR = Path(__file__).with_name("scenarios")
VARIANTS = ("ipid", "pid", "restricted", "gpi")
ALIGNMENTS = ("matched", "previous")


@dataclass(frozen=True)
class EstimatorWindows:
    """Window lengths in seconds.

    ``first`` drives first-derivative estimates and the nu = 1 model,
    ``second`` the nu = 2 model; ``denoise`` smooths the output used in ``e``.
    """

    first: float = 0.5
    second: float = 1.0
    denoise: float = 0.5
    denoise_degree: int = 0
    quadrature: str = "moment"


@dataclass(frozen=True)
class ControllerSpec:
    variant: str
    outputs: tuple[int, ...]
    nu: tuple[int, ...] = (1,)
    alpha: tuple[tuple[float, ...], ...] = ((1.0,),)
    gains: tuple[PidGains, ...] = ()
    alignment: str = "matched"
    antiwindup: bool = False
    ignore_f: bool = False
    u_init: tuple[float, ...] = (0.0,)
    lowpass_tau: float = 0.05
    # restricted model
    mass: float = 0.0
    k_hat: float = 0.0
    estimate_g: bool = True
    # GPI
    pole: float = -3.0
    compensate: bool = False
    varpi_tau: float = 0.0  # first-order smoothing of [varpi]_e, 0 disables

    @property
    def alpha_matrix(self) -> np.ndarray:
        return np.array(self.alpha, dtype=float)


@dataclass(frozen=True)
class ScenarioConfig:
    label: str
    plant: str
    ts: float
    duration: float
    controller: ControllerSpec
    trajectories: tuple[traject.ReferenceTrajectory, ...]
    noise: NoiseSpec = NoiseSpec()
    windows: EstimatorWindows = EstimatorWindows()
    plant_params: dict = field(default_factory=dict)
    fault: FaultSpec = FaultSpec()
    constraints: ActuatorConstraints | None = None
    x0: tuple[float, ...] | None = None
    variant: str = ""
    figure: str = ""
    description: str = ""
    metrics_fraction: float = 0.8
    divergence_bound: float = 1e6
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def name(self) -> str:
        return f"{self.label}:{self.variant}" if self.variant else self.label

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.ts))

    def build_plant(self) -> PlantModel:
        plant = build_plant(self.plant, **self.plant_params)
        if self.fault.kind != "none":
            plant = plant.with_fault(self.fault)
        if self.constraints is not None:
            plant = replace(plant, constraints=self.constraints)
        if self.x0 is not None:
            plant = replace(plant, x0=tuple(self.x0))
        return plant

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# dict helpers


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> tuple[str, Any]:
    """``"a.b=1.5"`` -> ``("a.b", 1.5)``; values use TOML syntax, bare words are strings."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not key=value")
    key, value = (part.strip() for part in text.split("=", 1))
    if not key:
        raise ConfigurationError(f"override {text!r} has an empty key")
    try:
        parsed = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value
    return key, parsed


def apply_overrides(data: dict, overrides: dict[str, Any]) -> dict:
    out = copy.deepcopy(data)
    for dotted, value in overrides.items():
        node = out
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"cannot override {dotted!r}: {part!r} is not a table")
        node[parts[-1]] = value
    return out


# ---------------------------------------------------------------------------
# parsing


def _vector(value, n: int, name: str) -> tuple[float, ...]:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,))
    return tuple(float(v) for v in arr)


def _gains(table: dict, nu: int, mass: float, k_hat: float, variant: str) -> PidGains:
    if "kp" in table or "ki" in table or "kd" in table or "ki_chain" in table:
        chain = table.get("ki_chain")
        return PidGains(
            float(table.get("kp", 0.0)),
            float(table.get("ki", 0.0)),
            float(table.get("kd", 0.0)),
            None if chain is None else tuple(chain),
        )
    pole = float(table.get("pole", -3.0))
    if variant == "restricted" or (variant == "pid" and mass > 0):
        return restricted_model_pid(mass, k_hat, pole)
    return pole_placement_pid(nu, pole, int(table.get("integrators", 1)))


def _controller(table: dict, plant: PlantModel) -> ControllerSpec:
    variant = table.get("variant")
    if variant not in VARIANTS:
        raise ConfigurationError(f"controller.variant must be one of {VARIANTS}, got {variant!r}")
    outputs = tuple(int(i) for i in table.get("outputs", range(plant.input_dim)))
    p, m = len(outputs), plant.input_dim
    if any(not 0 <= i < plant.output_dim for i in outputs):
        raise ConfigurationError(f"outputs {outputs} outside the plant's {plant.output_dim} outputs")
    if p != m:
        raise ConfigurationError(f"{p} controlled outputs for {m} inputs: the loop must be square")
    if variant in ("restricted", "gpi") and m != 1:
        raise ConfigurationError(f"variant {variant!r} needs a SISO plant")
    nu = tuple(int(n) for n in np.broadcast_to(np.asarray(table.get("nu", 1)), (p,)))
    alpha_raw = np.asarray(table.get("alpha", 1.0), dtype=float)
    if alpha_raw.ndim < 2:
        alpha = np.diag(np.broadcast_to(alpha_raw, (p,)))
    else:
        alpha = alpha_raw
    if alpha.shape != (p, m):
        raise ConfigurationError(f"alpha must be {p}x{m}")
    mass = float(table.get("mass", 0.0))
    k_hat = float(table.get("k_hat", 0.0))
    channels = table.get("channels")
    if channels is None:
        channels = [table] * p
    if len(channels) != p:
        raise ConfigurationError(f"{len(channels)} gain tables for {p} channels")
    try:
        gains = tuple(_gains(ch, nu[j], mass, k_hat, variant) for j, ch in enumerate(channels))
    except ValueError as exc:
        raise ConfigurationError(f"bad gains: {exc}") from None
    alignment = table.get("alignment", "matched")
    if alignment not in ALIGNMENTS:
        raise ConfigurationError(f"alignment must be one of {ALIGNMENTS}")
    if variant == "restricted" and mass <= 0:
        raise ConfigurationError("restricted model needs mass > 0")
    spec = ControllerSpec(
        variant=variant,
        outputs=outputs,
        nu=nu,
        alpha=tuple(tuple(float(v) for v in row) for row in alpha),
        gains=gains,
        alignment=alignment,
        antiwindup=bool(table.get("antiwindup", False)),
        ignore_f=bool(table.get("ignore_f", False)),
        u_init=_vector(table.get("u_init", 0.0), m, "u_init"),
        lowpass_tau=float(table.get("lowpass_tau", 0.05)),
        mass=mass,
        k_hat=k_hat,
        estimate_g=bool(table.get("estimate_g", True)),
        pole=float(table.get("pole", -3.0)),
        compensate=bool(table.get("compensate", False)),
        varpi_tau=float(table.get("varpi_tau", 0.0)),
    )
    if variant == "ipid":
        # construction validates nu and alpha
        from ..control import UltraLocalState

        UltraLocalState(spec.nu, alpha)
    return spec


def _check_window(value: float, ts: float, name: str) -> float:
    value = float(value)
    m = round(value / ts)
    if not value > 0 or m < 1 or abs(m * ts - value) > 1e-6 * value:
        raise ConfigurationError(f"window {name}={value} must be a positive multiple of ts={ts}")
    return value


def config_from_dict(data: dict, variant: str = "") -> ScenarioConfig:
    """Validate a merged scenario table and build the typed config."""
    try:
        label = str(data["label"])
        plant_label = data["plant"]
        ts = float(data["ts"])
        duration = float(data["duration"])
    except KeyError as exc:
        raise ConfigurationError(f"missing required key {exc.args[0]!r}") from None
    if plant_label not in PLANTS:
        raise ConfigurationError(f"unknown plant {plant_label!r}")
    if not (math.isfinite(ts) and ts > 0):
        raise ConfigurationError("ts must be > 0")
    if not (math.isfinite(duration) and duration >= 0):
        raise ConfigurationError("duration must be >= 0")
    plant_params = dict(data.get("plant_params", {}))
    try:
        plant = build_plant(plant_label, **plant_params)
    except TypeError as exc:
        raise ConfigurationError(f"bad plant parameter: {exc}") from None

    fault_t = data.get("fault", {})
    fault = FaultSpec(fault_t.get("kind", "none"), float(fault_t.get("factor", 1.0)), float(fault_t.get("t_onset", 0.0)))

    cons_t = data.get("constraints")
    constraints = None
    if cons_t:
        m = plant.input_dim
        inf = math.inf
        constraints = ActuatorConstraints(
            _vector(cons_t.get("u_min", -inf), m, "u_min"),
            _vector(cons_t.get("u_max", inf), m, "u_max"),
            _vector(cons_t.get("du_min", -inf), m, "du_min"),
            _vector(cons_t.get("du_max", inf), m, "du_max"),
        )

    noise_t = data.get("noise", {})
    variance = float(noise_t.get("variance", 0.0))
    noise = NoiseSpec("gaussian-white" if variance > 0 else "none", variance, int(noise_t.get("seed", 0)))

    win_t = data.get("estimators", {})
    windows = EstimatorWindows(
        _check_window(win_t.get("first", 0.5), ts, "first"),
        _check_window(win_t.get("second", 1.0), ts, "second"),
        _check_window(win_t.get("denoise", 0.5), ts, "denoise"),
        int(win_t.get("denoise_degree", 0)),
        str(win_t.get("quadrature", "moment")),
    )

    controller = _controller(data.get("controller", {}), plant)

    traj_t = data.get("trajectory")
    if traj_t is None:
        raise ConfigurationError("missing trajectory table")
    if isinstance(traj_t, dict):
        traj_t = [traj_t]
    if len(traj_t) != len(controller.outputs):
        raise ConfigurationError(f"{len(traj_t)} trajectories for {len(controller.outputs)} controlled outputs")
    try:
        trajectories = tuple(traject.from_config(t) for t in traj_t)
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"bad trajectory: {exc}") from None

    x0 = data.get("x0")
    if x0 is not None:
        x0 = tuple(float(v) for v in x0)
        if len(x0) != plant.state_dim:
            raise ConfigurationError(f"x0 needs {plant.state_dim} entries")

    fraction = float(data.get("metrics_fraction", 0.8))
    if not 0 < fraction <= 1:
        raise ConfigurationError("metrics_fraction must be in (0, 1]")

    return ScenarioConfig(
        label=label,
        plant=plant_label,
        ts=ts,
        duration=duration,
        controller=controller,
        trajectories=trajectories,
        noise=noise,
        windows=windows,
        plant_params=plant_params,
        fault=fault,
        constraints=constraints,
        x0=x0,
        variant=variant,
        figure=str(data.get("figure", "")),
        description=str(data.get("description", "")),
        metrics_fraction=fraction,
        divergence_bound=float(data.get("divergence_bound", 1e6)),
        raw=data,
    )


# ---------------------------------------------------------------------------
# files


def scenario_path(label: str) -> Path:
    name = label.replace("/", "-")
    path = SCENARIO_DIR / f"{name}.toml"
    if not path.exists():
        known = ", ".join(sorted(p.stem for p in SCENARIO_DIR.glob("*.toml")))
        raise ConfigurationError(f"unknown scenario {label!r}; known: {known}")
    return path


def read_table(source: str | Path) -> dict:
    """Raw TOML table of a catalogue label or a config file path."""
    path = Path(source)
    if not (path.suffix == ".toml" and path.exists()):
        path = scenario_path(str(source))
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None


def load_configs(
    source: str | Path,
    overrides: dict[str, Any] | None = None,
    variant: str | None = None,
) -> list[ScenarioConfig]:
    """All variants of a scenario (or just ``variant``), overrides applied last.

    ``source`` may carry the variant as ``label:variant``.
    """
    text = str(source)
    if variant is None and ":" in text and not Path(text).exists():
        text, variant = text.rsplit(":", 1)
    table = read_table(text)
    variants = table.pop("variants", {})
    table.pop("compare", None)
    overrides = overrides or {}
    if not variants:
        if variant:
            raise ConfigurationError(f"{text} has no variant {variant!r}")
        return [config_from_dict(apply_overrides(table, overrides))]
    names = list(variants) if variant is None else [variant]
    configs = []
    for name in names:
        if name not in variants:
            raise ConfigurationError(f"{text} has no variant {name!r}; known: {', '.join(variants)}")
        merged = apply_overrides(deep_merge(table, variants[name]), overrides)
        configs.append(config_from_dict(merged, name))
    return configs


def load_config(source: str | Path, overrides: dict[str, Any] | None = None, variant: str | None = None) -> ScenarioConfig:
    configs = load_configs(source, overrides, variant)
    if len(configs) != 1:
        raise ConfigurationError(f"{source} has several variants; pick one with label:variant")
    return configs[0]


def comparison_pair(label: str) -> tuple[str, str] | None:
    """``(primary, baseline)`` variant names declared by a scenario, if any."""
    table = read_table(label).get("compare")
    if not table:
        return None
    return table["primary"], table["baseline"]
