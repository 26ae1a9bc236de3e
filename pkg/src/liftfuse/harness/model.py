"""The fused two-branch network, its head, and batch assembly."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import SparseVoxelTensor, Tensor, VoxelLayout
from ..autodiff import functional as F
from ..backbones import STREAM_HEAD, init_backbone_2d, init_backbone_3d, kaiming_uniform, run_stage_2d, run_stage_3d
from ..consistency import StageTerm, path_consistency_terms, total_consistency_loss
from ..errors import ConfigError
from ..geometry import CameraModel, GridSpec
from ..lifting import build_lifting_operator, fuse, lift
from ..scene import SceneSample
from .config import ExperimentConfig


# ---- data ----------------------------------------------------------------------

@dataclass
class PreparedSample:
    image: np.ndarray  # (3, H, W)
    coords: np.ndarray  # (N, 3) canonical
    features: np.ndarray  # (N, 4)
    labels: np.ndarray  # (N,)


def prepare(sample: SceneSample) -> PreparedSample:
    """Voxelize once; the point count channel is compressed with ``log1p``."""
    vox = sample.voxels()
    feats = vox.features.data.copy()
    feats[:, 3] = np.log1p(feats[:, 3])
    coords = vox.coords
    labels = sample.labels[coords[:, 0], coords[:, 1], coords[:, 2]].astype(np.int64)
    return PreparedSample(sample.image, coords, feats, labels)


@dataclass
class Batch:
    images: np.ndarray  # (B, 3, H, W)
    voxels: SparseVoxelTensor  # stacked stage-0 volume
    labels: np.ndarray  # per stage-0 voxel

    @property
    def size(self) -> int:
        return self.images.shape[0]


def make_batch(samples, grid_dims) -> Batch:
    layouts = [VoxelLayout(s.coords, grid_dims, assume_sorted=True) for s in samples]
    layout = VoxelLayout.stack(layouts)
    feats = np.concatenate([s.features for s in samples]) if samples else np.zeros((0, 4))
    return Batch(np.stack([s.image for s in samples]), SparseVoxelTensor(layout, Tensor(feats)),
                 np.concatenate([s.labels for s in samples]))


# ---- head ----------------------------------------------------------------------

def detection_head(y_final: SparseVoxelTensor, weight, bias) -> Tensor:
    """Linear per-voxel classifier: ``(N, C) -> (N, n_classes + 1)`` logits."""
    if y_final.channels != weight.shape[1]:
        raise ConfigError(f"head expects {weight.shape[1]} channels, got {y_final.channels}")
    return F.add(F.matmul(y_final.features, F.transpose(weight, (1, 0))), bias)


def coarse_parent(layouts: list) -> np.ndarray:
    """Row of the final-stage voxel that contains each stage-0 voxel."""
    parent = np.arange(len(layouts[0]))
    for fine in layouts[:-1]:
        parent = fine.pooled(2)[1][parent]
    return parent


# ---- network -------------------------------------------------------------------

@dataclass
class ForwardResult:
    logits: Tensor  # final-stage logits
    parent: np.ndarray  # stage-0 voxel -> final-stage row
    l3d: Tensor
    terms: list = field(default_factory=list)
    activation_norms: dict = field(default_factory=dict)  # stage -> mean |activation|

    @property
    def lcons(self) -> Tensor:
        return total_consistency_loss(t.loss for t in self.terms)

    def voxel_logits(self) -> np.ndarray:
        return self.logits.data[self.parent]


class FusionNet:
    """2-D backbone, sparse 3-D backbone, lifting operators and a linear head."""

    def __init__(self, cfg: ExperimentConfig, camera: CameraModel, grid: GridSpec, seed: int):
        self.cfg = cfg
        self.grid = grid
        self.camera = camera
        spec = cfg.backbone
        n = spec.n_stages
        grid.check_stages(n)
        self.n_classes = cfg.dataset.n_classes
        concat = cfg.fusion_mode == "concat"
        extra = {t + 1: spec.channels_3d[t - 1] for t in cfg.fusion_stages if concat and t < n}
        self.b3 = init_backbone_3d(spec, seed, extra)
        self.b2 = init_backbone_2d(spec, seed) if cfg.modality == "fusion" else None
        needed = set(cfg.fusion_stages)
        if cfg.consistency is not None:
            for t in cfg.consistency.active_stages:
                needed |= {t, t + 1}
        self.lifts = {}
        if self.b2 is not None:
            for t in sorted(needed):
                self.lifts[t] = build_lifting_operator(camera, grid, t, spec.channels_2d[t - 1],
                                                       spec.channels_3d[t - 1], seed=seed, query=cfg.query)
        head_in = spec.channels_3d[-1] * (2 if concat and n in cfg.fusion_stages else 1)
        rng = np.random.default_rng([seed, STREAM_HEAD])
        k = self.n_classes + 1
        self.head_w = Tensor.parameter(kaiming_uniform(rng, (k, head_in)), "head.weight")
        self.head_b = Tensor.parameter(np.zeros(k), "head.bias")

    def parameters(self) -> dict:
        out = dict(self.b3.parameters())
        if self.b2 is not None:
            out.update(self.b2.parameters())
        for op in self.lifts.values():
            out.update(op.parameters())
        out["head.weight"] = self.head_w
        out["head.bias"] = self.head_b
        return dict(sorted(out.items()))

    def state(self) -> dict:
        return {k: p.data.copy() for k, p in self.parameters().items()}

    def load_state(self, state: dict) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise ConfigError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ConfigError(f"checkpoint shape mismatch for {k}")
            p.data = np.array(state[k], dtype=np.float64)

    def forward(self, batch: Batch, with_consistency: bool = True) -> ForwardResult:
        cfg = self.cfg
        n = cfg.backbone.n_stages
        use_cons = with_consistency and cfg.uses_consistency
        xs = {}
        if self.b2 is not None:
            x = Tensor(batch.images)
            # consistency needs x_t for active t only; f_{t+1} runs inside the 2-D path
            top = max(cfg.fusion_stages, default=0)
            if use_cons:
                top = max(top, max(cfg.consistency.active_stages))
            for t in range(1, top + 1):
                x = run_stage_2d(self.b2.stage(t), x)
                xs[t] = x
        y = batch.voxels
        ys, layouts, norms = {0: y}, [y.layout], {}
        fused_in = None
        for t in range(1, n + 1):
            y = run_stage_3d(self.b3.stage(t), y, fused_in, cfg.fusion_mode)
            fused_in = None
            ys[t] = y
            layouts.append(y.layout)
            norms[t] = float(np.abs(y.features.data).mean()) if len(y) else 0.0
            if t in cfg.fusion_stages:
                lifted = lift(self.lifts[t], xs[t], y.layout)
                if t < n:
                    fused_in = lifted
                else:
                    y = fuse(y, lifted, cfg.fusion_mode)
        logits = detection_head(y, self.head_w, self.head_b)
        parent = coarse_parent(layouts)
        l3d = F.cross_entropy(F.take_rows(logits, parent), batch.labels)
        terms: list[StageTerm] = []
        if use_cons:
            terms = path_consistency_terms(self.b2, self.b3, self.lifts, xs,
                                           {t: layouts[t] for t in range(n + 1)}, cfg.consistency, ys)
        return ForwardResult(logits, parent, l3d, terms, norms)
