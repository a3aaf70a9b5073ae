"""Closed-form bridge drift and time marginals between Gaussian measures."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clouds import PointCloud

_EIG_FLOOR = 1e-12


def _sym_sqrt(mat: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Symmetric matrix square root via eigen-decomposition, floored eigenvalues."""
    w, q = np.linalg.eigh((mat + mat.T) / 2.0)
    w = np.maximum(w, _EIG_FLOOR)
    r = 1.0 / np.sqrt(w) if inverse else np.sqrt(w)
    return (q * r) @ q.T


@dataclass(frozen=True)
class GaussianPair:
    """Source N(mean0, cov0) and target N(mean1, cov1) with volatility epsilon."""

    mean0: np.ndarray
    mean1: np.ndarray
    cov0: np.ndarray = field(repr=False)
    cov1: np.ndarray = field(repr=False)
    epsilon: float

    def __post_init__(self):
        m0 = np.atleast_1d(np.asarray(self.mean0, dtype=np.float64))
        m1 = np.atleast_1d(np.asarray(self.mean1, dtype=np.float64))
        c0 = np.atleast_2d(np.asarray(self.cov0, dtype=np.float64))
        c1 = np.atleast_2d(np.asarray(self.cov1, dtype=np.float64))
        d = m0.shape[0]
        if m1.shape != (d,) or c0.shape != (d, d) or c1.shape != (d, d):
            raise ValueError("inconsistent mean/covariance shapes")
        for c, name in ((c0, "cov0"), (c1, "cov1")):
            if not np.allclose(c, c.T):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(c)) <= 0:
                raise ValueError(f"{name} must be positive definite")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        for attr, val in (("mean0", m0), ("mean1", m1), ("cov0", c0), ("cov1", c1)):
            object.__setattr__(self, attr, val)

    @property
    def dim(self) -> int:
        return self.mean0.shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "mean0": self.mean0.tolist(),
                "mean1": self.mean1.tolist(),
                "cov0": self.cov0.reshape(-1).tolist(),
                "cov1": self.cov1.reshape(-1).tolist(),
                "epsilon": self.epsilon,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "GaussianPair":
        obj = json.loads(text)
        d = len(obj["mean0"])
        return cls(
            np.array(obj["mean0"]),
            np.array(obj["mean1"]),
            np.array(obj["cov0"]).reshape(d, d),
            np.array(obj["cov1"]).reshape(d, d),
            float(obj["epsilon"]),
        )


def cross_covariance(pair: GaussianPair) -> np.ndarray:
    """Cross-covariance C = Cov(X0, X1) of the optimal entropic coupling.

    C = (1/2) cov0^{1/2} (M - eps I) cov0^{-1/2} with
    M = (4 cov0^{1/2} cov1 cov0^{1/2} + eps^2 I)^{1/2}; this is the unique C
    making the Gaussian coupling satisfy the entropic first-order conditions
    (eps cov0^{-1} C = cov1 - C^T cov0^{-1} C).
    """
    eps = pair.epsilon
    root = _sym_sqrt(pair.cov0)
    inv_root = _sym_sqrt(pair.cov0, inverse=True)
    m = _sym_sqrt(4.0 * root @ pair.cov1 @ root + eps**2 * np.eye(pair.dim))
    return 0.5 * root @ (m - eps * np.eye(pair.dim)) @ inv_root


def gaussian_bridge_marginal(
    pair: GaussianPair, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the bridge marginal at time t in [0, 1]."""
    if not 0 <= t <= 1:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    c = cross_covariance(pair)
    mean = (1.0 - t) * pair.mean0 + t * pair.mean1
    cov = (
        (1.0 - t) ** 2 * pair.cov0
        + t**2 * pair.cov1
        + t * (1.0 - t) * (c + c.T)
        + pair.epsilon * t * (1.0 - t) * np.eye(pair.dim)
    )
    return mean, cov


def gaussian_bridge_drift(pair: GaussianPair, z: np.ndarray, t: float) -> np.ndarray:
    """Closed-form bridge drift; affine in z. Accepts a d-vector or (N, d) batch.

    With (X0, X1) coupled by `cross_covariance` and X_t the Brownian-bridge
    interpolant, b(z, t) = (E[X1 | X_t = z] - z) / (1 - t), a Gaussian
    conditional expectation.
    """
    if not 0 <= t < 1:
        raise ValueError(f"t must lie in [0, 1), got {t}")
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    zb = np.atleast_2d(z)

    c = cross_covariance(pair)
    mean_t, cov_t = gaussian_bridge_marginal(pair, t)
    cov_1t = (1.0 - t) * c.T + t * pair.cov1  # Cov(X1, X_t)
    gain = cov_1t @ np.linalg.inv(cov_t)
    e_x1 = pair.mean1[None, :] + (zb - mean_t[None, :]) @ gain.T
    out = (e_x1 - zb) / (1.0 - t)
    return out[0] if single else out


@dataclass(frozen=True)
class GaussianBridgeDrift:
    """Adapter exposing the closed-form drift through the common interface."""

    pair: GaussianPair
    tau_max: float = 1.0

    def drift(self, z: np.ndarray, t: float) -> np.ndarray:
        return gaussian_bridge_drift(self.pair, z, t)


def sample_gaussian(
    pair: GaussianPair, side: str, count: int, seed: int
) -> PointCloud:
    """Seeded draws from the requested marginal via a symmetric root of the cov."""
    if side == "source":
        mean, cov = pair.mean0, pair.cov0
    elif side == "target":
        mean, cov = pair.mean1, pair.cov1
    else:
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")
    rng = np.random.default_rng(seed)
    root = _sym_sqrt(cov)
    return PointCloud(mean[None, :] + rng.standard_normal((count, pair.dim)) @ root.T)


def random_spd(dim: int, seed: int, eig_range: tuple[float, float] = (0.5, 2.0)) -> np.ndarray:
    """Random SPD matrix Q diag(lam) Q^T with uniform spectrum in eig_range."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    lam = rng.uniform(*eig_range, size=dim)
    return (q * lam) @ q.T
