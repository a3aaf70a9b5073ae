"""Euler-Maruyama simulation of the bridge SDE on a uniform grid over [0, tau]."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .clouds import PointCloud

_TRAJ_MAGIC = b"SBTR"


class Drift(Protocol):
    def drift(self, z: np.ndarray, t: float) -> np.ndarray: ...


@dataclass(frozen=True)
class SdeConfig:
    tau: float
    steps: int = 1000
    epsilon: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


@dataclass(frozen=True)
class TrajectoryBatch:
    times: np.ndarray
    states: np.ndarray = field(repr=False)  # (n_paths, steps+1, d)
    seed: int = 0

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def to_csv(self, path: str | Path) -> None:
        """Long format: path_id, step, t, x_1..x_d."""
        d = self.dim
        header = "path_id,step,t," + ",".join(f"x_{i + 1}" for i in range(d))
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for p in range(self.n_paths):
                for s, t in enumerate(self.times):
                    cells = [str(p), str(s), repr(float(t))]
                    cells += [repr(float(v)) for v in self.states[p, s]]
                    fh.write(",".join(cells) + "\n")

    def to_binary(self, path: str | Path) -> None:
        """Point-cloud dump format extended with a step axis: 16-byte header
        (magic ``SBTR``, u32 LE n_paths, u32 LE n_times, u32 LE d), then the
        float64 time grid, then the states in path-major order."""
        n_paths, n_times, d = self.states.shape
        with open(path, "wb") as fh:
            fh.write(_TRAJ_MAGIC + struct.pack("<III", n_paths, n_times, d))
            fh.write(np.ascontiguousarray(self.times, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.states, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path: str | Path) -> "TrajectoryBatch":
        raw = Path(path).read_bytes()
        if raw[:4] != _TRAJ_MAGIC:
            raise ValueError(f"{path}: not a trajectory dump (bad magic)")
        n_paths, n_times, d = struct.unpack_from("<III", raw, 4)
        body = np.frombuffer(raw, dtype="<f8", offset=16)
        times = body[:n_times].copy()
        states = body[n_times:].reshape((n_paths, n_times, d)).copy()
        return cls(times, states)


def _path_noise(seed: int, path: int, steps: int, dim: int) -> np.ndarray:
    """Standard-normal increments for one path from a counter-based stream
    keyed on (seed, path); parallel path order cannot change the draws."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path + 1], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal((steps, dim))


def _initial_draws(init: PointCloud, n_paths: int, seed: int) -> np.ndarray:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    idx = gen.integers(0, len(init), size=n_paths)
    return init.points[idx].copy()


def simulate(
    field: Drift,
    init: PointCloud,
    cfg: SdeConfig,
    n_paths: int,
    initial_sampler: Callable[[int, np.random.Generator], np.ndarray] | None = None,
) -> TrajectoryBatch:
    """Euler-Maruyama: X_{t+h} = X_t + h b(X_t, t) + sqrt(eps h) xi.

    Starts from draws of `init` with replacement (or from `initial_sampler`
    when an exact source sampler is available). Bitwise reproducible from
    (cfg.seed, path index).
    """
    tau_max = getattr(field, "tau_max", 1.0)
    if cfg.tau > tau_max:
        raise ValueError(f"cfg.tau={cfg.tau} exceeds the field's tau_max={tau_max}")
    d = init.dim
    steps = cfg.steps
    h = cfg.tau / steps
    times = np.linspace(0.0, cfg.tau, steps + 1)

    if initial_sampler is not None:
        key = np.array([cfg.seed & 0xFFFFFFFFFFFFFFFF, 0], dtype=np.uint64)
        x = np.asarray(
            initial_sampler(n_paths, np.random.Generator(np.random.Philox(key=key))),
            dtype=np.float64,
        )
    else:
        x = _initial_draws(init, n_paths, cfg.seed)

    noise = None
    if cfg.epsilon > 0:
        noise = np.empty((n_paths, steps, d))
        for p in range(n_paths):
            noise[p] = _path_noise(cfg.seed, p, steps, d)

    states = np.empty((n_paths, steps + 1, d))
    states[:, 0] = x
    vol = np.sqrt(cfg.epsilon * h)
    for s in range(steps):
        x = x + h * field.drift(x, float(times[s]))
        if noise is not None:
            x = x + vol * noise[:, s]
        if not np.all(np.isfinite(x)):
            bad = int(np.argwhere(~np.isfinite(x).all(axis=1))[0, 0])
            raise FloatingPointError(
                f"non-finite state at step {s + 1}, path {bad}"
            )
        states[:, s + 1] = x
    return TrajectoryBatch(times, states, seed=cfg.seed)


def marginal_at(batch: TrajectoryBatch, t: float) -> PointCloud:
    """Point cloud of the states at the grid time nearest to t."""
    if batch.states.size == 0:
        raise ValueError("empty trajectory batch")
    tau = float(batch.times[-1])
    if not 0 <= t <= tau:
        raise ValueError(f"t={t} outside the simulated range [0, {tau}]")
    idx = int(np.argmin(np.abs(batch.times - t)))
    return PointCloud(batch.states[:, idx])


def drift_mse(field_a: Drift, field_b: Drift, probes: PointCloud, t: float) -> float:
    """Mean over probes of ||b_a(z, t) - b_b(z, t)||^2."""
    diff = field_a.drift(probes.points, t) - field_b.drift(probes.points, t)
    return float(np.mean(np.sum(diff**2, axis=1)))


def drift_magnitude(field: Drift, probes: PointCloud, t: float) -> float:
    """Mean squared drift norm over probes, for relative-error reporting."""
    b = field.drift(probes.points, t)
    return float(np.mean(np.sum(b**2, axis=1)))
