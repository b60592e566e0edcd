"""Piecewise-constant controls and the horizontal curves they generate.

A control is sampled on a uniform grid and held constant on every cell
``[k dt, (k+1) dt)``.  Developing it is then a finite product of exponentials,
which the step-2 group law evaluates exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algebra import GroupPoint, StepTwoAlgebra, _check_point, bracket, dilate

__all__ = [
    "ControlSignal",
    "Trajectory",
    "develop",
    "endpoint",
    "dilate_control",
    "dilated_curve",
    "average",
    "blowdown_samples",
    "l2_distance",
    "resample",
    "from_function",
]


@dataclass(frozen=True)
class ControlSignal:
    dt: float
    samples: np.ndarray  # (n, r)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        s = np.array(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or len(s) < 1:
            raise ValueError("a control needs at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("control samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "samples", s)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def rank(self) -> int:
        return self.samples.shape[1]

    @property
    def T(self) -> float:
        return self.dt * self.count

    @property
    def times(self) -> np.ndarray:
        """Left endpoints of the cells."""
        return self.dt * np.arange(self.count)

    def is_unit_speed(self, norm, tol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(norm(self.samples) - 1.0) <= tol))

    def length(self, norm) -> float:
        return float(np.sum(norm(self.samples)) * self.dt)

    def to_csv(self, path) -> None:
        header = ["t"] + [f"u_{i + 1}" for i in range(self.rank)]
        _write_csv(path, header, np.column_stack([self.times, self.samples]))


@dataclass(frozen=True)
class Trajectory:
    dt: float
    x: np.ndarray  # (n + 1, r)
    z: np.ndarray  # (n + 1, m)

    def __post_init__(self):
        for name in ("x", "z"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.x) != len(self.z):
            raise ValueError("x and z must have the same number of points")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.x))

    def point(self, k: int) -> GroupPoint:
        return GroupPoint(self.x[k], self.z[k])

    @property
    def points(self) -> list[GroupPoint]:
        return [self.point(k) for k in range(len(self))]

    @property
    def end(self) -> GroupPoint:
        return self.point(len(self) - 1)

    def to_csv(self, path) -> None:
        r, m = self.x.shape[1], self.z.shape[1]
        header = ["t"] + [f"x_{i + 1}" for i in range(r)] + [f"z_{k + 1}" for k in range(m)]
        _write_csv(path, header, np.column_stack([self.times, self.x, self.z]))


def _write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def from_function(fn, T: float, dt: float) -> ControlSignal:
    """Sample ``fn(t)`` at the left cell endpoints of ``[0, T]``."""
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a whole number of cells of width {dt}")
    t = dt * np.arange(n)
    return ControlSignal(dt, np.asarray(fn(t), dtype=float).reshape(n, -1))


def develop(A: StepTwoAlgebra, start: GroupPoint, u: ControlSignal) -> Trajectory:
    """``points[k+1] = points[k] * exp(dt u_k)``, evaluated in closed form."""
    _check_point(A, start)
    if u.rank != A.rank:
        raise ValueError(f"control rank {u.rank} does not match algebra rank {A.rank}")
    steps = u.dt * u.samples
    x = np.empty((u.count + 1, A.rank))
    x[0] = start.x
    np.cumsum(steps, axis=0, out=x[1:])
    x[1:] += start.x
    dz = 0.5 * bracket(A, x[:-1], steps)
    z = np.empty((u.count + 1, A.vdim))
    z[0] = start.z
    np.cumsum(dz, axis=0, out=z[1:])
    z[1:] += start.z
    return Trajectory(u.dt, x, z)


def endpoint(A: StepTwoAlgebra, start: GroupPoint, u: ControlSignal) -> GroupPoint:
    return develop(A, start, u).end


def dilate_control(u: ControlSignal, lam: float) -> ControlSignal:
    """``u_lam(t) = u(lam t)``: the same samples on a grid shrunk by ``lam``."""
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    return ControlSignal(u.dt / lam, u.samples)


def dilated_curve(A: StepTwoAlgebra, start: GroupPoint, u: ControlSignal, lam: float) -> Trajectory:
    """``t -> delta_{1/lam} gamma(lam t)`` developed from the dilated control."""
    return develop(A, dilate(A, 1.0 / lam, start), dilate_control(u, lam))


def _primitive(u: ControlSignal, t) -> np.ndarray:
    """``int_0^t u`` for piecewise-constant u, exact up to rounding."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    cum = np.vstack([np.zeros(u.rank), np.cumsum(u.samples, axis=0) * u.dt])
    k = np.clip(np.floor(t / u.dt).astype(int), 0, u.count)
    part = t - k * u.dt
    idx = np.minimum(k, u.count - 1)
    extra = np.where((k < u.count)[:, None], part[:, None] * u.samples[idx], 0.0)
    return cum[k] + extra


def average(u: ControlSignal, t0: float, t1: float) -> np.ndarray:
    """Integral average of u over ``[t0, t1]``."""
    if not (0.0 <= t0 < t1):
        raise ValueError(f"empty or reversed window [{t0}, {t1}]")
    if t1 > u.T * (1 + 1e-12):
        raise ValueError(f"window end {t1} exceeds the control horizon {u.T}")
    P = _primitive(u, [t0, min(t1, u.T)])
    return (P[1] - P[0]) / (t1 - t0)


def blowdown_samples(u: ControlSignal, lambdas, window: float) -> list[ControlSignal]:
    """Dilated controls ``u_lam`` restricted to ``[0, window]``."""
    out = []
    for lam in lambdas:
        if lam * window > u.T * (1 + 1e-12):
            raise ValueError(f"lam * window = {lam * window} exceeds the horizon {u.T}")
        v = dilate_control(u, lam)
        n = int(np.ceil(window / v.dt - 1e-9))
        out.append(ControlSignal(v.dt, v.samples[:n]))
    return out


def resample(u: ControlSignal, dt: float, T: float | None = None) -> ControlSignal:
    """Piecewise-constant lookup of u on a new uniform grid starting at 0."""
    T = u.T if T is None else T
    n = int(round(T / dt))
    t = dt * np.arange(n)
    k = np.minimum(np.floor(t / u.dt + 1e-9).astype(int), u.count - 1)
    return ControlSignal(dt, u.samples[k])


def l2_distance(u: ControlSignal, v: ControlSignal, t0: float, t1: float) -> float:
    """Exact L^2 distance of two piecewise-constant controls on ``[t0, t1]``."""
    if not t0 < t1 or t1 > min(u.T, v.T) * (1 + 1e-12):
        raise ValueError("window must lie inside both horizons")
    bu = u.dt * np.arange(u.count + 1)
    bv = v.dt * np.arange(v.count + 1)
    br = np.unique(np.concatenate([bu, bv, [t0, t1]]))
    br = br[(br >= t0) & (br <= t1)]
    mid = 0.5 * (br[:-1] + br[1:])
    ku = np.minimum((mid / u.dt).astype(int), u.count - 1)
    kv = np.minimum((mid / v.dt).astype(int), v.count - 1)
    diff = u.samples[ku] - v.samples[kv]
    return float(np.sqrt(np.sum(np.sum(diff**2, axis=1) * np.diff(br))))
