"""Minimal deterministic reverse-mode autodiff over dense and sparse voxel tensors."""

from . import functional
from .conv import conv1x1, conv2d, max_pool2d, upsample_nearest2d
from .gradcheck import finite_diff_gradient, relative_error
from .optim import AdamState, adam_step
from .sparse import (
    SparseVoxelTensor,
    VoxelLayout,
    downsample,
    sparse_conv3d,
    sparse_downsample,
    sparse_relu,
)
from .tensor import GradientMap, Tensor, as_tensor, backward, stop_gradient

__all__ = [
    "AdamState",
    "GradientMap",
    "SparseVoxelTensor",
    "Tensor",
    "VoxelLayout",
    "adam_step",
    "as_tensor",
    "backward",
    "conv1x1",
    "conv2d",
    "downsample",
    "finite_diff_gradient",
    "functional",
    "max_pool2d",
    "relative_error",
    "sparse_conv3d",
    "sparse_downsample",
    "sparse_relu",
    "stop_gradient",
    "upsample_nearest2d",
]
