"""Central finite differences, the verification oracle for every backward."""

from __future__ import annotations

from typing import Callable

import numpy as np


def finite_diff_gradient(fn: Callable[[np.ndarray], float], point, eps: float = 1e-5, coords=None) -> np.ndarray:
    """Central-difference gradient ``(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)``.

    ``coords`` optionally restricts the evaluation to a subset of flat
    indices; the other entries of the result are left at zero.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(point, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.zeros_like(flat)
    idx = range(flat.size) if coords is None else coords
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(fn(x))
        flat[i] = orig - eps
        fm = float(fn(x))
        flat[i] = orig
        grad[i] = (fp - fm) / (2 * eps)
    return grad.reshape(x.shape)


def relative_error(a, b, floor: float = 1e-12) -> float:
    """``||a - b|| / max(||a||, ||b||, floor)``."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))
