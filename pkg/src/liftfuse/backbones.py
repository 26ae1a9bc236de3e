"""Toy multi-stage 2-D and sparse 3-D backbones.

Each stage is ``layers x (conv -> ReLU)`` followed by a factor-2 downsample,
so stage ``t`` of either branch works at ``input / 2**t`` resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import (
    SparseVoxelTensor,
    Tensor,
    conv2d,
    downsample,
    sparse_conv3d,
    stop_gradient,
)
from .autodiff import functional as F
from .errors import ConfigError
from .geometry import VOXEL_FEATURES

# independent random streams per component so adding/removing one never shifts another
STREAM_2D = 2
STREAM_3D = 3
STREAM_HEAD = 7
STREAM_LIFT = 100


@dataclass(frozen=True)
class BackboneSpec:
    n_stages: int = 4
    channels_2d: tuple = (16, 32, 64, 64)
    channels_3d: tuple = (16, 32, 64, 64)
    in_channels_2d: int = 3
    in_channels_3d: int = VOXEL_FEATURES
    kernel_2d: int = 3
    kernel_3d: int = 3
    layers_per_stage: int = 2

    def __post_init__(self):
        object.__setattr__(self, "channels_2d", tuple(int(c) for c in self.channels_2d))
        object.__setattr__(self, "channels_3d", tuple(int(c) for c in self.channels_3d))
        if self.n_stages < 2:
            raise ConfigError("need at least two stages")
        if len(self.channels_2d) != self.n_stages or len(self.channels_3d) != self.n_stages:
            raise ConfigError("one channel count per stage required")
        if min(self.channels_2d + self.channels_3d) <= 0 or self.layers_per_stage < 1:
            raise ConfigError("channels and layer counts must be positive")
        if self.kernel_2d % 2 == 0 or self.kernel_3d % 2 == 0:
            raise ConfigError("kernel sizes must be odd")

    def stage_channels_2d(self, t: int) -> tuple[int, int]:
        """(input, output) channels of 2-D stage ``t`` (1-based)."""
        cin = self.in_channels_2d if t == 1 else self.channels_2d[t - 2]
        return cin, self.channels_2d[t - 1]

    def stage_channels_3d(self, t: int) -> tuple[int, int]:
        cin = self.in_channels_3d if t == 1 else self.channels_3d[t - 2]
        return cin, self.channels_3d[t - 1]

    def parameter_count(self) -> int:
        total = 0
        for t in range(1, self.n_stages + 1):
            for (cin, cout), k, d in (
                (self.stage_channels_2d(t), self.kernel_2d, 2),
                (self.stage_channels_3d(t), self.kernel_3d, 3),
            ):
                total += cin * cout * k ** d + cout
                total += (self.layers_per_stage - 1) * (cout * cout * k ** d + cout)
        return total


def kaiming_uniform(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class Stage2D:
    index: int
    weights: list
    biases: list
    pool: int = 2

    @property
    def channels(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights[0].shape[1]

    def parameters(self) -> dict:
        return {p.name: p for p in self.weights + self.biases}

    def stopped(self) -> "Stage2D":
        return replace(self, weights=[stop_gradient(w) for w in self.weights],
                       biases=[stop_gradient(b) for b in self.biases])


@dataclass
class Stage3D:
    index: int
    weights: list
    biases: list
    pool: int = 2

    @property
    def channels(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights[0].shape[1]

    def parameters(self) -> dict:
        return {p.name: p for p in self.weights + self.biases}

    def stopped(self) -> "Stage3D":
        """Same stage with every parameter behind a stop-gradient barrier."""
        return replace(self, weights=[stop_gradient(w) for w in self.weights],
                       biases=[stop_gradient(b) for b in self.biases])


@dataclass
class Backbone2D:
    stages: list = field(default_factory=list)

    def parameters(self) -> dict:
        out = {}
        for s in self.stages:
            out.update(s.parameters())
        return out

    def stage(self, t: int) -> Stage2D:
        return self.stages[t - 1]


@dataclass
class Backbone3D:
    stages: list = field(default_factory=list)

    def parameters(self) -> dict:
        out = {}
        for s in self.stages:
            out.update(s.parameters())
        return out

    def stage(self, t: int) -> Stage3D:
        return self.stages[t - 1]


def _make_stage(cls, prefix, t, cin, cout, k, ndim, layers, rng):
    weights, biases = [], []
    for layer in range(layers):
        ci = cin if layer == 0 else cout
        shape = (cout, ci) + (k,) * ndim
        weights.append(Tensor.parameter(kaiming_uniform(rng, shape), f"{prefix}.stage{t}.conv{layer}.weight"))
        biases.append(Tensor.parameter(np.zeros(cout), f"{prefix}.stage{t}.conv{layer}.bias"))
    return cls(t, weights, biases)


def init_backbone_2d(spec: BackboneSpec, seed: int) -> Backbone2D:
    rng = np.random.default_rng([seed, STREAM_2D])
    return Backbone2D([
        _make_stage(Stage2D, "2d", t, *spec.stage_channels_2d(t), spec.kernel_2d, 2, spec.layers_per_stage, rng)
        for t in range(1, spec.n_stages + 1)
    ])


def init_backbone_3d(spec: BackboneSpec, seed: int, extra_in: dict | None = None) -> Backbone3D:
    """``extra_in[t]`` widens the input of stage ``t`` (used by concat fusion)."""
    rng = np.random.default_rng([seed, STREAM_3D])
    extra_in = extra_in or {}
    stages = []
    for t in range(1, spec.n_stages + 1):
        cin, cout = spec.stage_channels_3d(t)
        stages.append(_make_stage(Stage3D, "3d", t, cin + extra_in.get(t, 0), cout, spec.kernel_3d, 3,
                                  spec.layers_per_stage, rng))
    return Backbone3D(stages)


def init_backbones(spec: BackboneSpec, seed: int) -> tuple[Backbone2D, Backbone3D]:
    """Kaiming-uniform weights and zero biases from seeded per-branch streams."""
    return init_backbone_2d(spec, seed), init_backbone_3d(spec, seed)


def run_stage_2d(stage: Stage2D, x_prev) -> Tensor:
    if x_prev.shape[-3] != stage.in_channels:
        raise ConfigError(f"stage {stage.index} expects {stage.in_channels} channels, got {x_prev.shape[-3]}")
    h = x_prev
    for w, b in zip(stage.weights, stage.biases):
        h = F.relu(conv2d(h, w, b, stride=1, padding=w.shape[-1] // 2))
    return downsample(h, stage.pool) if stage.pool > 1 else h


def fuse(y: SparseVoxelTensor, lifted: SparseVoxelTensor, mode: str = "sum") -> SparseVoxelTensor:
    """Sum or channel-concatenate lifted 2-D features onto 3-D features of the same occupancy."""
    if not y.layout.same_as(lifted.layout):
        raise ConfigError("fusion requires identical grids and occupancy")
    if mode == "sum":
        if y.channels != lifted.channels:
            raise ConfigError(f"sum fusion needs equal channels ({y.channels} vs {lifted.channels})")
        return y.with_features(F.add(y.features, lifted.features))
    if mode == "concat":
        return y.with_features(F.concat([y.features, lifted.features], axis=1))
    raise ConfigError(f"unknown fusion mode {mode!r}")


def run_stage_3d(stage: Stage3D, y_prev: SparseVoxelTensor, fused_in: SparseVoxelTensor | None = None,
                 mode: str = "sum") -> SparseVoxelTensor:
    """Fuse (optional) at the stage input, then sparse convs with ReLU, then downsample."""
    h = y_prev if fused_in is None else fuse(y_prev, fused_in, mode)
    if h.channels != stage.in_channels:
        raise ConfigError(f"stage {stage.index} expects {stage.in_channels} channels, got {h.channels}")
    for w, b in zip(stage.weights, stage.biases):
        h = sparse_conv3d(h, w, b)
        h = h.with_features(F.relu(h.features))
    return downsample(h, stage.pool) if stage.pool > 1 else h


def identity_stage_2d(t: int, channels: int) -> Stage2D:
    """Single 1x1 identity conv without pooling (used to build exact-match cases)."""
    w = Tensor.parameter(np.eye(channels).reshape(channels, channels, 1, 1), f"2d.stage{t}.conv0.weight")
    b = Tensor.parameter(np.zeros(channels), f"2d.stage{t}.conv0.bias")
    return Stage2D(t, [w], [b], pool=1)


def identity_stage_3d(t: int, channels: int) -> Stage3D:
    w = Tensor.parameter(np.eye(channels).reshape(channels, channels, 1, 1, 1), f"3d.stage{t}.conv0.weight")
    b = Tensor.parameter(np.zeros(channels), f"3d.stage{t}.conv0.bias")
    return Stage3D(t, [w], [b], pool=1)
