"""Point clouds (empirical measures) and their on-disk formats."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_BINARY_MAGIC = b"SBPC"
_HEADER_SIZE = 16


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of d-dimensional points, weighted uniformly."""

    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-d array, got ndim={pts.ndim}")
        if pts.shape[0] < 1:
            raise ValueError("a point cloud needs at least one point")
        if pts.shape[1] < 1:
            raise ValueError("points must have dimension >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def radius(self) -> float:
        """Maximum Euclidean norm over the points, recomputed on access."""
        return float(np.max(np.linalg.norm(self.points, axis=1)))

    @classmethod
    def from_csv(cls, path: str | Path) -> "PointCloud":
        """Load from CSV: one point per row, d columns, no header."""
        pts = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        return cls(pts)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for row in self.points:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def from_binary(cls, path: str | Path) -> "PointCloud":
        """Load the binary dump: 16-byte header (magic ``SBPC``, u32 LE count,
        u32 LE dim, 4 reserved bytes) followed by column-major float64 data."""
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER_SIZE or raw[:4] != _BINARY_MAGIC:
            raise ValueError(f"{path}: not a point-cloud dump (bad magic)")
        m, d = struct.unpack_from("<II", raw, 4)
        body = np.frombuffer(raw, dtype="<f8", offset=_HEADER_SIZE)
        if body.size != m * d:
            raise ValueError(f"{path}: expected {m * d} values, found {body.size}")
        return cls(body.reshape((d, m)).T)

    def to_binary(self, path: str | Path) -> None:
        m, d = self.points.shape
        header = _BINARY_MAGIC + struct.pack("<II", m, d) + b"\x00" * 4
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.points.T, dtype="<f8").tobytes())


@dataclass(frozen=True)
class EotProblem:
    """An entropic optimal-transport instance with squared-Euclidean cost."""

    source: PointCloud
    target: PointCloud
    epsilon: float

    def __post_init__(self):
        if self.source.dim != self.target.dim:
            raise ValueError(
                f"dimension mismatch: source is {self.source.dim}-d, "
                f"target is {self.target.dim}-d"
            )
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def radius(self) -> float:
        return max(self.source.radius, self.target.radius)


def squared_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (len(x), len(y))."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    sq = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(y * y, axis=1)[None, :]
        - 2.0 * x @ y.T
    )
    return np.maximum(sq, 0.0)
