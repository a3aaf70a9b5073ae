"""Synthetic point-cloud generators for the experiment harness."""

from __future__ import annotations

import numpy as np

from .clouds import PointCloud


def eight_gaussians(count: int, seed: int, radius: float = 2.0, std: float = 0.2) -> PointCloud:
    """Mixture of eight isotropic Gaussians equally spaced on a circle."""
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * rng.integers(0, 8, size=count) / 8.0
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return PointCloud(centers + std * rng.standard_normal((count, 2)))


def moons(count: int, seed: int, noise: float = 0.05) -> PointCloud:
    """Two interleaving half circles in the plane."""
    rng = np.random.default_rng(seed)
    n_top = count // 2
    n_bot = count - n_top
    th_top = np.pi * rng.uniform(size=n_top)
    th_bot = np.pi * rng.uniform(size=n_bot)
    top = np.stack([np.cos(th_top), np.sin(th_top)], axis=1)
    bot = np.stack([1.0 - np.cos(th_bot), 0.5 - np.sin(th_bot)], axis=1)
    pts = np.concatenate([top, bot], axis=0)
    return PointCloud(pts + noise * rng.standard_normal(pts.shape))


def uniform_cube(count: int, dim: int, seed: int) -> PointCloud:
    """Uniform draws from the unit cube [0, 1]^dim."""
    rng = np.random.default_rng(seed)
    return PointCloud(rng.uniform(size=(count, dim)))


def sphere_slice(count: int, dim: int, intrinsic_dim: int, seed: int) -> PointCloud:
    """Uniform draws from the unit sphere of the first `intrinsic_dim`
    coordinates, embedded in dim ambient dimensions (remaining coords zero)."""
    if not 1 <= intrinsic_dim <= dim:
        raise ValueError(f"intrinsic_dim must lie in [1, {dim}], got {intrinsic_dim}")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((count, intrinsic_dim))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    pts = np.zeros((count, dim))
    pts[:, :intrinsic_dim] = raw
    return PointCloud(pts)
