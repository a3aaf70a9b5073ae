"""Bridge drift field built from target samples and a dual potential vector."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clouds import PointCloud, squared_distances

DEFAULT_TAU_MAX = 0.99


@dataclass(frozen=True)
class BridgeWeights:
    """Softmax weights over the target atoms at a given (z, t)."""

    log_weights: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class DriftField:
    """Evaluatable drift b(z, t) = (-z + softmax-average of targets) / (1-t).

    The softmax log-weights are (g_j - ||Y_j - z||^2 / (2(1-t))) / eps.
    Evaluation refuses t > tau_max: near t = 1 the field collapses onto a
    single target atom and stops generalizing.
    """

    targets: PointCloud
    g: np.ndarray = field(repr=False)
    epsilon: float
    tau_max: float = DEFAULT_TAU_MAX

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64)
        if g.shape != (len(self.targets),):
            raise ValueError(
                f"potential vector has length {g.shape}, expected ({len(self.targets)},)"
            )
        if not np.all(np.isfinite(g)):
            raise ValueError("potential vector must be finite")
        if not 0 < self.tau_max < 1:
            raise ValueError(f"tau_max must lie in (0, 1), got {self.tau_max}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "g", g)

    def _check_time(self, t: float) -> None:
        if not 0 <= t <= self.tau_max:
            raise ValueError(
                f"t={t} outside the evaluable range [0, {self.tau_max}]"
            )

    def log_weights(self, z: np.ndarray, t: float) -> np.ndarray:
        """Unnormalized log-weights; shape (n,) for a single z, (N, n) for a batch."""
        self._check_time(t)
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        sq = squared_distances(np.atleast_2d(z), self.targets.points)
        lw = (self.g[None, :] - sq / (2.0 * (1.0 - t))) / self.epsilon
        return lw[0] if single else lw

    def bridge_weights(self, z: np.ndarray, t: float) -> BridgeWeights:
        lw = self.log_weights(z, t)
        return BridgeWeights(lw, softmax(lw))

    def drift(self, z: np.ndarray, t: float) -> np.ndarray:
        """Evaluate the drift at z (a d-vector or an (N, d) batch)."""
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        lw = self.log_weights(np.atleast_2d(z), t)
        w = softmax(lw)
        out = (-np.atleast_2d(z) + w @ self.targets.points) / (1.0 - t)
        return out[0] if single else out

    def to_csv(self, path: str | Path) -> None:
        """One target per row: d coordinates then the g value."""
        with open(path, "w") as fh:
            for y, gj in zip(self.targets.points, self.g):
                cells = [repr(float(v)) for v in y] + [repr(float(gj))]
                fh.write(",".join(cells) + "\n")

    @classmethod
    def from_csv(
        cls, path: str | Path, epsilon: float, tau_max: float = DEFAULT_TAU_MAX
    ) -> "DriftField":
        data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        return cls(PointCloud(data[:, :-1]), data[:, -1], epsilon, tau_max)


def softmax(log_weights: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    lw = np.asarray(log_weights, dtype=np.float64)
    shifted = lw - np.max(lw, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass
class BrownianBridgeSampler:
    """Samples the time-t marginal of a pinned Brownian motion of volatility eps."""

    epsilon: float
    rng: np.random.Generator

    def sample(self, x0: np.ndarray, x1: np.ndarray, t: float) -> np.ndarray:
        """Draw from N((1-t) x0 + t x1, eps t (1-t) I); x0/x1 may be batched.

        eps = 0 is allowed and returns the interpolation point exactly.
        """
        if not 0 < t < 1:
            raise ValueError(f"t must lie in (0, 1), got {t}")
        x0 = np.asarray(x0, dtype=np.float64)
        x1 = np.asarray(x1, dtype=np.float64)
        mean = (1.0 - t) * x0 + t * x1
        if self.epsilon == 0:
            return mean
        std = np.sqrt(self.epsilon * t * (1.0 - t))
        return mean + std * self.rng.standard_normal(mean.shape)


@dataclass(frozen=True)
class OracleEstimate:
    estimate: np.ndarray
    std_error: np.ndarray
    effective_sample_size: float
    degenerate: bool


def markovian_projection_oracle(
    coupling: np.ndarray,
    source: PointCloud,
    targets: PointCloud,
    epsilon: float,
    z: np.ndarray,
    t: float,
    n_mc: int,
    rng: np.random.Generator,
    n_bootstrap: int = 200,
) -> OracleEstimate:
    """Monte-Carlo estimate of E[(X1 - z)/(1-t) | X_t = z] under the
    Brownian-bridge mixture of `coupling`.

    Pairs (x0, x1) are drawn from the coupling and weighted by the exact
    Gaussian bridge-marginal density at X_t = z (self-normalized importance
    weighting; no binning bandwidth). Returns the estimate with a bootstrap
    standard error per coordinate.
    """
    if not 0 < t < 1:
        raise ValueError(f"t must lie in (0, 1), got {t}")
    coupling = np.asarray(coupling, dtype=np.float64)
    if np.any(coupling < 0) or not np.isclose(coupling.sum(), 1.0):
        raise ValueError("coupling must be a probability mass matrix")
    z = np.asarray(z, dtype=np.float64)
    m, n = coupling.shape

    flat = coupling.reshape(-1)
    cells = rng.choice(m * n, size=n_mc, p=flat / flat.sum())
    x0 = source.points[cells // n]
    x1 = targets.points[cells % n]

    mean = (1.0 - t) * x0 + t * x1
    var = epsilon * t * (1.0 - t)
    # unnormalized Gaussian log-density of X_t = z given the endpoints
    log_w = -np.sum((z[None, :] - mean) ** 2, axis=1) / (2.0 * var)
    log_w -= np.max(log_w)
    w = np.exp(log_w)
    values = (x1 - z[None, :]) / (1.0 - t)

    wsum = w.sum()
    estimate = (w[:, None] * values).sum(axis=0) / wsum
    ess = float(wsum**2 / np.sum(w**2))

    idx = rng.integers(0, n_mc, size=(n_bootstrap, n_mc))
    bw = w[idx]
    sums = bw.sum(axis=1)
    valid = sums > 0  # a resample can miss every draw that carries weight
    boot = np.einsum("bi,bid->bd", bw[valid], values[idx[valid]]) / sums[valid, None]
    std_error = (
        boot.std(axis=0, ddof=1) if boot.shape[0] >= 2 else np.zeros_like(estimate)
    )

    return OracleEstimate(estimate, std_error, ess, degenerate=ess < 30)
