"""Lidar-camera deep feature fusion with path-consistency regularization."""

__version__ = "0.1.0"
