"""Path-consistency regularization between the 2-D and 3-D branches.

For a stage ``t`` the two paths both start from the 2-D features ``x_t``:

    2-D path:  P_{t+1}( f_{t+1}(x_t) )     evolve in 2-D, then lift
    3-D path:  F_{t+1}( P_t(x_t) )         lift, then evolve in 3-D

and the stage loss is a distance between them on the stage-``t+1`` grid.
By default the 3-D path sees the 3-D stage parameters only through a
stop-gradient barrier, and ``x_t`` is detached so the stage loss only
trains ``f_{t+1}``, ``P_{t+1}`` and ``P_t``.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import SparseVoxelTensor, Tensor, VoxelLayout, stop_gradient
from .autodiff import functional as F
from .backbones import Backbone2D, Backbone3D, Stage2D, Stage3D, run_stage_2d, run_stage_3d
from .errors import ConfigError
from .lifting import LiftingOperator, lift, valid_mask

NORM_EPS = 1e-12
LOSS_TYPES = ("cosine", "l1")


class DegenerateLossWarning(UserWarning):
    """A consistency term had no valid voxels and was set to zero."""


@dataclass(frozen=True)
class ConsistencyConfig:
    loss_type: str = "cosine"
    alpha: float = 0.01
    active_stages: tuple = (1, 2, 3)  # t values; the term for t lives at the end of stage t+1
    variant: str = "dense"  # or "sparse_anchored"
    stop_3d_gradients: bool = True
    stagewise_scope: bool = True
    lift_grad: str = "both"  # "both": P_t and P_{t+1} train; "next_only": only P_{t+1}
    domain: str = "grid"  # dense-variant query domain: "grid" (every voxel) or "occupied"

    def __post_init__(self):
        object.__setattr__(self, "active_stages", tuple(sorted(int(t) for t in self.active_stages)))
        if self.loss_type not in LOSS_TYPES:
            raise ConfigError(f"loss_type must be one of {LOSS_TYPES}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError("alpha must be finite and nonnegative")
        if self.variant not in ("dense", "sparse_anchored"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.lift_grad not in ("both", "next_only"):
            raise ConfigError(f"unknown lift_grad {self.lift_grad!r}")
        if self.domain not in ("grid", "occupied"):
            raise ConfigError(f"unknown domain {self.domain!r}")
        if any(t < 1 for t in self.active_stages):
            raise ConfigError("consistency stages are t >= 1 (no term at the first stage)")

    def check(self, n_stages: int) -> None:
        if any(t > n_stages - 1 for t in self.active_stages):
            raise ConfigError(f"active stages must lie in 1..{n_stages - 1}")


@dataclass
class PathPair:
    y_2d: SparseVoxelTensor
    y_3d: SparseVoxelTensor
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.y_2d.layout.same_as(self.y_3d.layout):
            raise ConfigError("path outputs live on different occupancies")
        if self.y_2d.channels != self.y_3d.channels:
            raise ConfigError("path outputs have different channel counts")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (len(self.y_2d),):
            raise ConfigError("mask must have one entry per voxel")


def compute_path_2d(P_next: LiftingOperator, f_next: Stage2D, x_t, occupancy: VoxelLayout) -> SparseVoxelTensor:
    """``P_{t+1} o f_{t+1} o x_t`` on the stage-``t+1`` occupancy."""
    if P_next.stage != f_next.index:
        raise ConfigError(f"2-D path mixes P_{P_next.stage} with f_{f_next.index}")
    return lift(P_next, run_stage_2d(f_next, x_t), occupancy)


def compute_path_3d(F_next: Stage3D, P_t: LiftingOperator, x_t, occupancy: VoxelLayout,
                    stop_3d_gradients: bool = True, mode: str = "sum") -> SparseVoxelTensor:
    """``F_{t+1} o P_t o x_t``; with ``stop_3d_gradients`` the 3-D stage gets no gradient from this path."""
    if F_next.index != P_t.stage + 1:
        raise ConfigError(f"3-D path mixes F_{F_next.index} with P_{P_t.stage}")
    stage = F_next.stopped() if stop_3d_gradients else F_next
    return run_stage_3d(stage, lift(P_t, x_t, occupancy))


def stage_consistency_loss(pair: PathPair, loss_type: str = "cosine") -> Tensor:
    """Mean negative per-voxel cosine similarity, or mean absolute difference, over masked voxels."""
    if loss_type not in LOSS_TYPES:
        raise ConfigError(f"loss_type must be one of {LOSS_TYPES}")
    a, b = pair.y_2d.features, pair.y_3d.features
    keep = pair.mask.copy()
    if loss_type == "cosine":
        keep &= np.linalg.norm(a.data, axis=1) >= NORM_EPS
        keep &= np.linalg.norm(b.data, axis=1) >= NORM_EPS
    rows = np.nonzero(keep)[0]
    if len(rows) == 0:
        warnings.warn("consistency term has no valid voxels; using zero", DegenerateLossWarning, stacklevel=2)
        return Tensor(0.0, op="degenerate_loss")
    A, B = F.take_rows(a, rows), F.take_rows(b, rows)
    if loss_type == "l1":
        return F.mean(F.abs(F.sub(A, B)))
    cos = F.div(F.row_dot(A, B), F.mul(F.sqrt(F.row_dot(A, A)), F.sqrt(F.row_dot(B, B))))
    return F.neg(F.mean(cos))


def total_consistency_loss(stage_losses) -> Tensor:
    """Plain sum of the per-stage terms."""
    stage_losses = list(stage_losses)
    if not stage_losses:
        return Tensor(0.0, op="zero")
    total = stage_losses[0]
    for term in stage_losses[1:]:
        total = F.add(total, term)
    return total


def combined_loss(l3d: Tensor, lcons: Tensor, alpha: float) -> Tensor:
    """``L_3D + alpha * L_consistency``."""
    return F.add(l3d, F.mul(lcons, float(alpha)))


def sparse_anchored_loss(y2d_path: SparseVoxelTensor, y_t_evolved: SparseVoxelTensor, loss_type: str = "cosine",
                         mask_2d: np.ndarray | None = None) -> Tensor:
    """Ablation variant comparing the 2-D path with ``F_{t+1}(y_t)``, only where both are occupied."""
    if y2d_path.grid_shape != y_t_evolved.grid_shape:
        raise ConfigError("anchored loss needs identical grids")
    common, ia, ib = np.intersect1d(y2d_path.layout.keys, y_t_evolved.layout.keys, return_indices=True)
    if mask_2d is not None:
        keep = np.asarray(mask_2d, dtype=bool)[ia]
        ia, ib = ia[keep], ib[keep]
    if len(ia) == 0:
        warnings.warn("anchored consistency has an empty domain; using zero", DegenerateLossWarning, stacklevel=2)
        return Tensor(0.0, op="degenerate_loss")
    layout = VoxelLayout(y2d_path.layout.coords[ia], y2d_path.grid_shape, y2d_path.layout.batch[ia], assume_sorted=True)
    pair = PathPair(SparseVoxelTensor(layout, F.take_rows(y2d_path.features, ia)),
                    SparseVoxelTensor(layout, F.take_rows(y_t_evolved.features, ib)),
                    np.ones(len(ia), dtype=bool))
    return stage_consistency_loss(pair, loss_type)


@functools.lru_cache(maxsize=16)
def full_grid_layout(grid_shape, n_batch: int) -> VoxelLayout:
    """Every voxel of the grid for ``n_batch`` samples; cached, layouts are immutable."""
    H, W, D = grid_shape
    idx = np.stack(np.meshgrid(np.arange(H), np.arange(W), np.arange(D), indexing="ij"), -1).reshape(-1, 3)
    coords = np.tile(idx, (n_batch, 1))
    batch = np.repeat(np.arange(n_batch), len(idx))
    return VoxelLayout(coords, grid_shape, batch, assume_sorted=True)


@dataclass
class StageTerm:
    t: int
    loss: Tensor
    n_valid: int


def path_consistency_terms(backbone2d: Backbone2D, backbone3d: Backbone3D, lifts: dict, xs: dict, layouts: dict,
                           cfg: ConsistencyConfig, ys: dict | None = None) -> list[StageTerm]:
    """Per-stage consistency terms for every active ``t``.

    Args:
        xs: ``{t: x_t}`` 2-D stage outputs (batched maps).
        layouts: ``{t: occupancy of y_t}`` for every stage grid.
        ys: ``{t: y_t}`` 3-D stage outputs; only needed by the anchored variant.
    """
    terms = []
    for t in cfg.active_stages:
        x_t = stop_gradient(xs[t]) if cfg.stagewise_scope else xs[t]
        P_t, P_next = lifts[t], lifts[t + 1]
        if cfg.lift_grad == "next_only":
            P_t = P_t.stopped()
        f_next, F_next = backbone2d.stage(t + 1), backbone3d.stage(t + 1)
        if cfg.variant == "sparse_anchored":
            y_t = ys[t]
            if cfg.stop_3d_gradients or cfg.stagewise_scope:
                y_t = y_t.with_features(stop_gradient(y_t.features))
            stage3 = F_next.stopped() if cfg.stop_3d_gradients else F_next
            evolved = run_stage_3d(stage3, y_t)
            y2d = compute_path_2d(P_next, f_next, x_t, evolved.layout)
            mask2 = valid_mask(P_next, evolved.layout)
            loss = sparse_anchored_loss(y2d, evolved, cfg.loss_type, mask2)
            terms.append(StageTerm(t, loss, int(mask2.sum())))
            continue
        if cfg.domain == "grid":
            n_batch = xs[t].shape[0] if xs[t].ndim == 4 else 1
            domain = full_grid_layout(layouts[t].grid_shape, n_batch)
        else:
            domain = layouts[t]
        y3d = compute_path_3d(F_next, P_t, x_t, domain, cfg.stop_3d_gradients)
        y2d = compute_path_2d(P_next, f_next, x_t, y3d.layout)
        mask = valid_mask(P_next, y3d.layout)
        if cfg.domain == "occupied":
            child_valid = valid_mask(P_t, domain).astype(np.float64)[:, None]
            parent = domain.pooled(2)[1]
            mask &= np.bincount(parent, weights=child_valid[:, 0], minlength=len(y3d.layout)) > 0
        pair = PathPair(y2d, y3d, mask)
        terms.append(StageTerm(t, stage_consistency_loss(pair, cfg.loss_type), int(mask.sum())))
    return terms
