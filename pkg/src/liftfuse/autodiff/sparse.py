"""Sparse voxel tensors and their differentiable ops.

A :class:`VoxelLayout` is the immutable occupancy structure (coords + batch
ids + grid shape) kept in canonical order: sorted by ``(batch, i, j, k)``.
A :class:`SparseVoxelTensor` pairs a layout with an ``(N, C)`` feature node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .. import kernels
from ..errors import ConfigError
from .tensor import Tensor, as_tensor


class VoxelLayout:
    """Occupied voxel coordinates in canonical order."""

    __slots__ = ("coords", "batch", "grid_shape", "keys", "_cache")

    def __init__(self, coords, grid_shape, batch=None, *, assume_sorted=False):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        batch = np.zeros(len(coords), dtype=np.int64) if batch is None else np.asarray(batch, dtype=np.int64)
        grid_shape = tuple(int(s) for s in grid_shape)
        if len(grid_shape) != 3 or min(grid_shape) <= 0:
            raise ConfigError(f"grid_shape must be three positive ints, got {grid_shape}")
        if len(coords) and ((coords < 0).any() or (coords >= np.array(grid_shape)).any()):
            raise ConfigError("voxel index outside grid")
        H, W, D = grid_shape
        keys = ((batch * H + coords[:, 0]) * W + coords[:, 1]) * D + coords[:, 2]
        if not assume_sorted:
            order = np.argsort(keys, kind="stable")
            keys, coords, batch = keys[order], coords[order], batch[order]
        if len(keys) > 1 and not (np.diff(keys) > 0).all():
            raise ConfigError("voxel indices must be unique")
        self.coords = coords
        self.batch = batch
        self.grid_shape = grid_shape
        self.keys = keys
        self._cache = {}

    @classmethod
    def canonical(cls, coords, grid_shape, batch=None):
        """Build a layout and return ``(layout, perm)`` with ``perm`` mapping canonical rows to input rows."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        b = np.zeros(len(coords), dtype=np.int64) if batch is None else np.asarray(batch, dtype=np.int64)
        H, W, D = grid_shape
        keys = ((b * H + coords[:, 0]) * W + coords[:, 1]) * D + coords[:, 2]
        perm = np.argsort(keys, kind="stable")
        return cls(coords[perm], grid_shape, b[perm], assume_sorted=True), perm

    def __len__(self):
        return len(self.keys)

    @property
    def n_batch(self) -> int:
        return int(self.batch.max()) + 1 if len(self.batch) else 0

    def same_as(self, other: "VoxelLayout") -> bool:
        return self is other or (
            self.grid_shape == other.grid_shape and np.array_equal(self.keys, other.keys)
        )

    def batch_coords(self) -> np.ndarray:
        return np.column_stack([self.batch, self.coords])

    def neighbors(self, ksize: int, stride: int = 1) -> tuple[np.ndarray, "VoxelLayout"]:
        """Rulebook ``(M, ksize**3)`` and output layout for a submanifold convolution."""
        key = ("nbr", ksize, stride)
        if key not in self._cache:
            out = self if stride == 1 else self.pooled(stride)[0]
            table = kernels.neighbor_table(self.keys, out.batch_coords(), self.grid_shape, ksize, stride)
            self._cache[key] = (table, out)
        return self._cache[key]

    def pooled(self, factor: int) -> tuple["VoxelLayout", np.ndarray]:
        """Coarse layout (index floor division) and parent row of every voxel."""
        key = ("pool", factor)
        if key not in self._cache:
            if any(s % factor for s in self.grid_shape):
                raise ConfigError(f"grid {self.grid_shape} not divisible by {factor}")
            grid = tuple(s // factor for s in self.grid_shape)
            coarse = self.coords // factor
            H, W, D = grid
            ckeys = ((self.batch * H + coarse[:, 0]) * W + coarse[:, 1]) * D + coarse[:, 2]
            uniq, first, parent = np.unique(ckeys, return_index=True, return_inverse=True)
            layout = VoxelLayout(coarse[first], grid, self.batch[first], assume_sorted=True)
            self._cache[key] = (layout, parent.reshape(-1).astype(np.int64))
        return self._cache[key]

    def select_batch(self, b: int) -> np.ndarray:
        return np.nonzero(self.batch == b)[0]

    @staticmethod
    def stack(layouts) -> "VoxelLayout":
        """Concatenate single-sample layouts into one batched layout."""
        grid = layouts[0].grid_shape
        if any(l.grid_shape != grid for l in layouts):
            raise ConfigError("cannot stack layouts with different grids")
        coords = np.concatenate([l.coords for l in layouts]) if layouts else np.zeros((0, 3), np.int64)
        batch = np.concatenate([np.full(len(l), b, dtype=np.int64) for b, l in enumerate(layouts)])
        return VoxelLayout(coords, grid, batch, assume_sorted=True)


@dataclass(frozen=True)
class SparseVoxelTensor:
    """Features on occupied voxels of a grid."""

    layout: VoxelLayout
    features: Tensor = field(repr=False)

    def __post_init__(self):
        f = self.features
        if not isinstance(f, Tensor):
            object.__setattr__(self, "features", as_tensor(f))
            f = self.features
        if f.ndim != 2 or f.shape[0] != len(self.layout):
            raise ConfigError(f"features {f.shape} do not match {len(self.layout)} voxels")

    @classmethod
    def from_entries(cls, coords, feats, grid_shape, batch=None) -> "SparseVoxelTensor":
        """Canonicalize unsorted ``(coords, feats)`` pairs."""
        layout, perm = VoxelLayout.canonical(coords, grid_shape, batch)
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2:
            feats = feats.reshape(len(perm), -1)
        return cls(layout, Tensor(feats[perm], requires_grad=False, op="const"))

    @property
    def grid_shape(self) -> tuple:
        return self.layout.grid_shape

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    @property
    def coords(self) -> np.ndarray:
        return self.layout.coords

    def __len__(self):
        return len(self.layout)

    def entries(self) -> Iterator[tuple[tuple[int, int, int], np.ndarray]]:
        for c, f in zip(self.layout.coords, self.features.data):
            yield (int(c[0]), int(c[1]), int(c[2])), f

    def with_features(self, features: Tensor) -> "SparseVoxelTensor":
        return SparseVoxelTensor(self.layout, features)

    def to_dense(self) -> np.ndarray:
        """``(C, H, W, D)`` array for a single-sample tensor (zeros elsewhere)."""
        out = np.zeros((self.channels,) + self.grid_shape)
        c = self.layout.coords
        out[:, c[:, 0], c[:, 1], c[:, 2]] = self.features.data.T
        return out


def sparse_conv3d(x: SparseVoxelTensor, kernel, bias=None, stride: int = 1) -> SparseVoxelTensor:
    """Submanifold 3-D cross-correlation.

    Output occupancy is the input occupancy (``stride == 1``) or its
    floor-divided image. Output voxel ``o`` aggregates inputs at
    ``o * stride + offset`` for offsets in the ``k**3`` window; empty
    neighbors contribute zero.
    """
    kernel = as_tensor(kernel)
    bias = as_tensor(bias) if bias is not None else None
    if kernel.ndim != 5 or len(set(kernel.shape[2:])) != 1 or kernel.shape[2] % 2 == 0:
        raise ConfigError(f"kernel must be (C_out, C_in, k, k, k) with odd k, got {kernel.shape}")
    co, ci, k = kernel.shape[0], kernel.shape[1], kernel.shape[2]
    if x.channels != ci:
        raise ConfigError(f"input has {x.channels} channels, kernel expects {ci}")
    if stride < 1:
        raise ConfigError("stride must be positive")
    if stride > 1 and any(s % stride for s in x.grid_shape):
        raise ConfigError(f"stride {stride} does not divide grid {x.grid_shape}")
    table, out_layout = x.layout.neighbors(k, stride)
    feats = x.features
    cols = kernels.gather_rows(feats.data, table)
    # (co, ci, kx, ky, kz) -> rows ordered (offset, ci) to match gather_rows
    wmat = kernel.data.transpose(2, 3, 4, 1, 0).reshape(k ** 3 * ci, co)
    out = cols @ wmat
    if bias is not None:
        out += bias.data
    n_in = len(x.layout)

    def bw(g):
        gx = gk = gb = None
        if feats.requires_grad:
            gx = kernels.scatter_rows(g @ wmat.T, table, n_in)
        if kernel.requires_grad:
            gk = (cols.T @ g).reshape(k, k, k, ci, co).transpose(4, 3, 0, 1, 2)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=0)
        return (gx, gk, gb) if bias is not None else (gx, gk)

    parents = (feats, kernel, bias) if bias is not None else (feats, kernel)
    return SparseVoxelTensor(out_layout, Tensor(out, parents, bw, op="sparse_conv3d"))


def sparse_downsample(x: SparseVoxelTensor, factor: int = 2) -> SparseVoxelTensor:
    """Floor-divide voxel indices; colliding voxels merge by per-channel max."""
    out_layout, parent = x.layout.pooled(factor)
    feats = x.features
    vals, arg = kernels.segment_max(feats.data, parent, len(out_layout))
    n_in, C = feats.shape

    def bw(g):
        gx = np.zeros((n_in, C))
        cols = np.broadcast_to(np.arange(C), arg.shape)
        gx[arg, cols] = g
        return (gx,)

    return SparseVoxelTensor(out_layout, Tensor(vals, (feats,), bw, op="sparse_downsample"))


def sparse_relu(x: SparseVoxelTensor) -> SparseVoxelTensor:
    from .functional import relu

    return x.with_features(relu(x.features))


def downsample(x, factor: int = 2):
    """Halve spatial resolution of a 2-D map (max pool) or a sparse volume (max merge)."""
    from .conv import max_pool2d

    if factor != 2:
        raise ConfigError("only factor 2 downsampling is supported")
    if isinstance(x, SparseVoxelTensor):
        return sparse_downsample(x, factor)
    return max_pool2d(x, factor)
