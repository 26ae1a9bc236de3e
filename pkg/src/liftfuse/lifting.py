"""2-D to 3-D lifting operators.

A stage-``t`` operator upsamples a stage-``t`` feature map to input pixel
resolution with a two-level pyramid (1x1 conv, nearest x2, optional ReLU,
1x1 conv, nearest x``2**(t-1)``) and reads the pixel under each occupied
voxel's projected center. The last nearest upsample is never materialized:
queries index the half-way map through integer division, which gives the
same values as sampling the full-resolution map.

The stage-0 operator has no parameters; it samples the image directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import SparseVoxelTensor, Tensor, VoxelLayout, conv1x1, stop_gradient, upsample_nearest2d
from .autodiff import functional as F
from .backbones import STREAM_LIFT, fuse, kaiming_uniform
from .errors import ConfigError
from .geometry import CameraModel, GridSpec, ProjectionTable, project_voxel_centers

__all__ = ["LiftingOperator", "build_lifting_operator", "lift", "fuse", "gather_pixels"]


@dataclass
class LiftingOperator:
    stage: int
    table: ProjectionTable
    in_channels: int
    out_channels: int
    params: dict = field(default_factory=dict)
    query: str = "nearest"
    nonlinear: bool = True
    level: int | None = None  # geometric level; defaults to ``stage``

    @property
    def geom_level(self) -> int:
        return self.stage if self.level is None else self.level

    def relabeled(self, stage: int) -> "LiftingOperator":
        """Same geometry and parameters under another stage index."""
        return replace(self, stage=stage, level=self.geom_level)

    def parameters(self) -> dict:
        return dict(self.params)

    def stopped(self) -> "LiftingOperator":
        return replace(self, params={k: stop_gradient(v) for k, v in self.params.items()})

    @property
    def prefix(self) -> str:
        return f"lift.P{self.geom_level}"


def build_lifting_operator(camera: CameraModel, grid: GridSpec, t: int, in_channels: int,
                           out_channels: int | None = None, seed: int = 0, query: str = "nearest",
                           nonlinear: bool = True) -> LiftingOperator:
    if t < 0:
        raise ConfigError("stage index must be nonnegative")
    if query not in ("nearest", "bilinear"):
        raise ConfigError(f"unknown query mode {query!r}")
    H, W = camera.image_size
    if H % 2 ** t or W % 2 ** t:
        raise ConfigError(f"image size {camera.image_size} not divisible by 2**{t}")
    table = project_voxel_centers(camera, grid, t)
    if t == 0:
        return LiftingOperator(0, table, in_channels, in_channels, {}, query, nonlinear)
    out_channels = in_channels if out_channels is None else out_channels
    rng = np.random.default_rng([seed, STREAM_LIFT + t])
    prefix = f"lift.P{t}"
    params = {
        f"{prefix}.level0.weight": Tensor.parameter(kaiming_uniform(rng, (out_channels, in_channels)), f"{prefix}.level0.weight"),
        f"{prefix}.level0.bias": Tensor.parameter(np.zeros(out_channels), f"{prefix}.level0.bias"),
        f"{prefix}.level1.weight": Tensor.parameter(kaiming_uniform(rng, (out_channels, out_channels)), f"{prefix}.level1.weight"),
        f"{prefix}.level1.bias": Tensor.parameter(np.zeros(out_channels), f"{prefix}.level1.bias"),
    }
    return LiftingOperator(t, table, in_channels, out_channels, params, query, nonlinear)


def gather_pixels(x: Tensor, batch, rows, cols, weights) -> Tensor:
    """``out[n] = sum_j weights[n, j] * x[batch[n], :, rows[n, j], cols[n, j]]`` for a ``(B, C, H, W)`` map."""
    B, C, H, W = x.shape
    flat = ((batch[:, None] * H + rows) * W + cols)  # (N, J) pixel ids
    xf = x.data.transpose(0, 2, 3, 1).reshape(B * H * W, C)
    out = np.einsum("nj,njc->nc", weights, xf[flat]) if flat.shape[1] > 1 else weights * xf[flat[:, 0]]

    def bw(g):
        gf = np.zeros((B * H * W, C))
        for j in range(flat.shape[1]):
            np.add.at(gf, flat[:, j], g * weights[:, j:j + 1])
        return (gf.reshape(B, H, W, C).transpose(0, 3, 1, 2),)

    return Tensor(out, (x,), bw, op="gather_pixels")


def _upsample(op: LiftingOperator, x: Tensor) -> tuple[Tensor, int]:
    """Pyramid up to ``H' / 2**(t-1)``; returns the map and the remaining nearest factor."""
    if op.geom_level == 0:
        return x, 1
    p = op.params
    pre = op.prefix
    h = conv1x1(x, p[f"{pre}.level0.weight"], p[f"{pre}.level0.bias"])
    h = upsample_nearest2d(h, 2)
    if op.nonlinear:
        h = F.relu(h)
    h = conv1x1(h, p[f"{pre}.level1.weight"], p[f"{pre}.level1.bias"])
    return h, 2 ** (op.geom_level - 1)


def lift(op: LiftingOperator, x, occupancy: VoxelLayout) -> SparseVoxelTensor:
    """Lifted features on the occupied voxels of the stage grid; voxels that do not project into the image get zeros."""
    if occupancy.grid_shape != op.table.grid.dims:
        raise ConfigError(f"occupancy grid {occupancy.grid_shape} != stage-{op.stage} lift grid {op.table.grid.dims}")
    squeeze = x.ndim == 3
    x4 = F.reshape(x, (1,) + x.shape) if squeeze else x
    H, W = op.table.image_size
    f = 2 ** op.geom_level
    if x4.shape[1] != op.in_channels or x4.shape[2] * f != H or x4.shape[3] * f != W:
        raise ConfigError(
            f"stage-{op.stage} lift expects ({op.in_channels}, {H // f}, {W // f}) maps, got {x4.shape[1:]}")
    if len(occupancy) and occupancy.batch.max() >= x4.shape[0]:
        raise ConfigError("occupancy refers to more samples than the feature map holds")

    h, s = _upsample(op, x4)
    u, v, valid = op.table.lookup(occupancy.coords)
    rows_idx = np.nonzero(valid)[0]
    b = occupancy.batch[rows_idx]
    u, v = u[rows_idx], v[rows_idx]
    if op.query == "nearest":
        r = (np.floor(v).astype(np.int64) // s)[:, None]
        c = (np.floor(u).astype(np.int64) // s)[:, None]
        w = np.ones((len(rows_idx), 1))
    else:
        # bilinear on the full-resolution map (pixel centers at +0.5), clamped at the border
        fu, fv = u - 0.5, v - 0.5
        c0, r0 = np.floor(fu).astype(np.int64), np.floor(fv).astype(np.int64)
        au, av = fu - c0, fv - r0
        cc = np.clip(np.stack([c0, c0 + 1, c0, c0 + 1], 1), 0, W - 1) // s
        rr = np.clip(np.stack([r0, r0, r0 + 1, r0 + 1], 1), 0, H - 1) // s
        w = np.stack([(1 - au) * (1 - av), au * (1 - av), (1 - au) * av, au * av], 1)
        r, c = rr, cc
    vals = gather_pixels(h, b, r, c, w)
    # scatter valid rows into the full occupancy; invalid rows stay zero
    index = np.full(len(occupancy), -1, dtype=np.int64)
    index[rows_idx] = np.arange(len(rows_idx))
    feats = F.take_rows(vals, index)
    return SparseVoxelTensor(occupancy, feats)


def valid_mask(op: LiftingOperator, occupancy: VoxelLayout) -> np.ndarray:
    return op.table.lookup(occupancy.coords)[2]
