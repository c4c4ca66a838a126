"""Uniformly sampled signals, measurement noise and tracking metrics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class SampledSignal:
    """A real sequence sampled every ``ts`` seconds starting at ``t0``.

    ``valid_from`` is the index of the first sample that carries a real
    estimate; earlier samples are placeholders written during estimator
    warm-up.
    """

    samples: np.ndarray
    ts: float
    t0: float = 0.0
    name: str = "y"
    valid_from: int = 0

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not (math.isfinite(self.ts) and self.ts > 0):
            raise ValueError(f"sampling period must be finite and > 0, got {self.ts}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) * self.ts

    @property
    def t_end(self) -> float:
        return self.t0 + (self.samples.size - 1) * self.ts

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is off the grid."""
        k = round((t - self.t0) / self.ts)
        if abs(self.t0 + k * self.ts - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not on the sampling grid")
        if not 0 <= k < self.samples.size:
            raise ValueError(f"t={t} outside [{self.t0}, {self.t_end}]")
        return k

    def with_samples(self, samples, name: str | None = None, valid_from: int | None = None) -> "SampledSignal":
        return SampledSignal(
            samples,
            self.ts,
            self.t0,
            self.name if name is None else name,
            self.valid_from if valid_from is None else valid_from,
        )

    def to_csv(self, path: str | Path) -> None:
        write_csv(path, [self])


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    variance: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian-white"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not math.isfinite(self.variance):
            raise ValueError("noise variance must be finite")
        if self.variance < 0:
            raise ValueError(f"noise variance must be >= 0, got {self.variance}")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.variance > 0


@dataclass(frozen=True)
class TrackingMetrics:
    rms_error: float
    max_abs_error: float
    eval_window: tuple[float, float] = field(default=(0.0, 0.0))


def noise_generator(spec: NoiseSpec) -> np.random.Generator:
    # PCG64 keyed by the seed: bit-identical streams across runs and platforms.
    return np.random.Generator(np.random.PCG64(spec.seed))


def add_noise(clean: SampledSignal, spec: NoiseSpec) -> SampledSignal:
    """Return ``clean`` plus iid N(0, variance) samples drawn from PCG64(seed)."""
    if not spec.active:
        return clean
    rng = noise_generator(spec)
    noise = rng.normal(0.0, math.sqrt(spec.variance), size=len(clean))
    return clean.with_samples(clean.samples + noise)


def tracking_metrics(
    y: SampledSignal,
    y_ref: SampledSignal,
    window: tuple[float, float] | None = None,
) -> TrackingMetrics:
    """RMS and peak of ``y - y_ref`` over the samples inside ``window``.

    The default window is the final 80% of the common record.
    """
    if len(y) != len(y_ref) or not math.isclose(y.ts, y_ref.ts, rel_tol=1e-12) or not math.isclose(
        y.t0, y_ref.t0, rel_tol=1e-12, abs_tol=1e-12
    ):
        raise ValueError("signals do not share a sampling grid")
    if len(y) == 0:
        raise ValueError("empty evaluation window")
    if window is None:
        window = default_window(y.t0, y.t_end)
    t_start, t_end = window
    t = y.times
    tol = 1e-9 * y.ts
    mask = (t >= t_start - tol) & (t <= t_end + tol)
    if not mask.any():
        raise ValueError(f"empty evaluation window {window}")
    err = y.samples[mask] - y_ref.samples[mask]
    rms = float(np.sqrt(np.mean(err**2)))
    peak = float(np.max(np.abs(err)))
    # sqrt(mean(e^2)) can exceed max|e| by an ulp when all |e| are equal
    rms = min(rms, peak)
    return TrackingMetrics(rms, peak, (float(t_start), float(t_end)))


def default_window(t0: float, t_end: float, fraction: float = 0.8) -> tuple[float, float]:
    return (t_end - fraction * (t_end - t0), t_end)


def write_csv(path: str | Path, signals: Sequence[SampledSignal]) -> None:
    """Write one or more signals sharing a grid as ``t,<name>,...`` columns."""
    if not signals:
        raise ValueError("nothing to write")
    first = signals[0]
    for s in signals[1:]:
        if len(s) != len(first) or s.ts != first.ts or s.t0 != first.t0:
            raise ValueError(f"signal {s.name!r} is on a different grid")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [s.name for s in signals])
        for k, t in enumerate(first.times):
            writer.writerow([repr(float(t))] + [repr(float(s.samples[k])) for s in signals])


def read_csv(path: str | Path) -> list[SampledSignal]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "t":
        raise ValueError("first column must be 't'")
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    t = data[:, 0]
    if t.size < 2:
        raise ValueError("need at least two rows to recover the sampling period")
    ts = float(t[1] - t[0])
    return [SampledSignal(data[:, j], ts, float(t[0]), name) for j, name in enumerate(header[1:], start=1)]
