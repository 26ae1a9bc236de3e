"""Pinhole camera, voxel grids, voxelization and voxel-center projection.

Pixel convention: pixel column ``c`` covers ``u in [c, c + 1)`` and row ``r``
covers ``v in [r, r + 1)``. A projection is valid when the depth is positive
and ``0 <= u < W'``, ``0 <= v < H'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import SparseVoxelTensor, Tensor, VoxelLayout
from .errors import ConfigError

VOXEL_FEATURES = 4  # mean offset from center (3, in voxel units) + point count


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # world -> camera
    translation: np.ndarray
    image_size: tuple  # (H', W')

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "image_size", tuple(int(s) for s in self.image_size))
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError("focal lengths must be positive")
        if len(self.image_size) != 2 or min(self.image_size) <= 0:
            raise ConfigError(f"image_size must be two positive ints, got {self.image_size}")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9:
            raise ConfigError("rotation is not orthonormal")

    @classmethod
    def look_at(cls, eye, target, f, image_size, up=(0.0, 0.0, 1.0)) -> "CameraModel":
        """Camera at ``eye`` looking at ``target`` with square pixels and a centered principal point."""
        eye = np.asarray(eye, dtype=np.float64)
        z = np.asarray(target, dtype=np.float64) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, np.asarray(up, dtype=np.float64))
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        H, W = image_size
        return cls(f, f, W / 2.0, H / 2.0, R, -R @ eye, (H, W))

    def scaled(self, k: float) -> "CameraModel":
        H, W = self.image_size
        return CameraModel(self.fx * k, self.fy * k, self.cx * k, self.cy * k, self.rotation,
                           self.translation, (int(round(H * k)), int(round(W * k))))

    def to_array(self) -> np.ndarray:
        return np.concatenate([[self.fx, self.fy, self.cx, self.cy], self.rotation.reshape(-1),
                               self.translation, self.image_size]).astype(np.float64)

    @classmethod
    def from_array(cls, a) -> "CameraModel":
        a = np.asarray(a, dtype=np.float64)
        return cls(a[0], a[1], a[2], a[3], a[4:13].reshape(3, 3), a[13:16], (int(a[16]), int(a[17])))


@dataclass(frozen=True)
class GridSpec:
    origin: np.ndarray
    voxel_size: float
    dims: tuple  # (H, W, D) voxels along world x, y, z

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.voxel_size > 0:
            raise ConfigError("voxel_size must be positive")
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ConfigError(f"dims must be three positive ints, got {self.dims}")

    def check_stages(self, n_stages: int) -> None:
        """Every stage grid ``dims / 2**t`` for ``t <= n_stages`` must be integral."""
        f = 2 ** n_stages
        if any(d % f for d in self.dims):
            raise ConfigError(f"grid dims {self.dims} not divisible by 2**{n_stages}")

    def stage(self, t: int) -> "GridSpec":
        f = 2 ** t
        if any(d % f for d in self.dims):
            raise ConfigError(f"grid dims {self.dims} not divisible by {f}")
        return GridSpec(self.origin, self.voxel_size * f, tuple(d // f for d in self.dims))

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.dims) * self.voxel_size

    def centers(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=np.float64) + 0.5) * self.voxel_size

    def all_indices(self) -> np.ndarray:
        H, W, D = self.dims
        return np.stack(np.meshgrid(np.arange(H), np.arange(W), np.arange(D), indexing="ij"), -1).reshape(-1, 3)

    def index_of(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Voxel index ``floor((p - origin) / voxel_size)`` and in-bounds mask."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        idx = np.floor((p - self.origin) / self.voxel_size).astype(np.int64)
        inside = ((idx >= 0) & (idx < np.asarray(self.dims))).all(axis=1)
        return idx, inside


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    intensity: np.ndarray | None = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(p).all():
            raise ConfigError("point coordinates must be finite")
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)


def voxelize(cloud: PointCloud, grid: GridSpec) -> SparseVoxelTensor:
    """Occupied voxels with ``(mean offset / voxel_size, count)`` features; out-of-bounds points are dropped."""
    idx, inside = grid.index_of(cloud.points)
    idx, pts = idx[inside], cloud.points[inside]
    H, W, D = grid.dims
    if len(idx) == 0:
        layout = VoxelLayout(np.zeros((0, 3), np.int64), grid.dims)
        return SparseVoxelTensor(layout, Tensor(np.zeros((0, VOXEL_FEATURES))))
    keys = (idx[:, 0] * W + idx[:, 1]) * D + idx[:, 2]
    uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    counts = np.bincount(inv, minlength=len(uniq)).astype(np.float64)
    offset = (pts - grid.centers(idx)) / grid.voxel_size
    mean = np.stack([np.bincount(inv, weights=offset[:, a], minlength=len(uniq)) for a in range(3)], 1)
    mean /= counts[:, None]
    layout = VoxelLayout(idx[first], grid.dims, assume_sorted=True)
    return SparseVoxelTensor(layout, Tensor(np.column_stack([mean, counts])))


def project_points(camera: CameraModel, points) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection; returns ``(u, v, depth, valid)``."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pc = p @ camera.rotation.T + camera.translation
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * pc[:, 0] / z + camera.cx
        v = camera.fy * pc[:, 1] / z + camera.cy
    H, W = camera.image_size
    valid = (z > 0) & (u >= 0) & (u < W) & (v >= 0) & (v < H)
    u = np.where(z > 0, u, np.nan)
    v = np.where(z > 0, v, np.nan)
    return u, v, z, valid


def world_to_image(camera: CameraModel, point) -> tuple[float, float, float, bool]:
    u, v, z, valid = project_points(camera, point)
    return float(u[0]), float(v[0]), float(z[0]), bool(valid[0])


@dataclass(frozen=True)
class ProjectionTable:
    """Per-voxel projected centers of one stage grid (arrays shaped like the grid)."""

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray
    grid: GridSpec
    image_size: tuple

    def lookup(self, coords) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        i, j, k = c[:, 0], c[:, 1], c[:, 2]
        return self.u[i, j, k], self.v[i, j, k], self.valid[i, j, k]


def project_voxel_centers(camera: CameraModel, grid: GridSpec, stage: int) -> ProjectionTable:
    g = grid.stage(stage)
    idx = g.all_indices()
    u, v, _, valid = project_points(camera, g.centers(idx))
    shape = g.dims
    u = np.where(valid, u, 0.0).reshape(shape)
    v = np.where(valid, v, 0.0).reshape(shape)
    return ProjectionTable(u, v, valid.reshape(shape), g, camera.image_size)
