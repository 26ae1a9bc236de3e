"""Reverse-mode automatic differentiation over float64 numpy arrays.

Nodes are created in a strictly increasing order, so sorting reachable nodes
by creation id gives a topological order. Backward walks that order in
reverse, which makes gradient accumulation deterministic.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from ..errors import ConfigError, NumericError, UsageError

_ids = itertools.count()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """A node in the compute graph.

    ``parents`` and ``backward_fn`` are empty for leaves. A parameter is a
    leaf with a ``name``. A node with ``stop=True`` passes its value through
    unchanged but never propagates gradient to its parents.
    """

    __slots__ = ("data", "parents", "backward_fn", "name", "stop", "requires_grad", "id", "op")

    def __init__(
        self,
        data,
        parents: tuple = (),
        backward_fn: BackwardFn | None = None,
        *,
        name: str | None = None,
        stop: bool = False,
        requires_grad: bool | None = None,
        op: str = "",
        check: bool = True,
    ):
        arr = np.asarray(data, dtype=np.float64)
        if check and not np.isfinite(arr).all():
            raise NumericError(f"non-finite values produced by {op or 'leaf'!r}")
        self.data = arr
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name
        self.stop = stop
        if requires_grad is None:
            requires_grad = (not stop) and any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self.id = next(_ids)
        self.op = op

    @classmethod
    def parameter(cls, data, name: str) -> "Tensor":
        return cls(np.array(data, dtype=np.float64), name=name, requires_grad=True, op="param")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        label = self.name or self.op or "tensor"
        return f"Tensor({label}, shape={self.shape})"

    # operator sugar; implementations live in functional
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from . import functional as F
        return F.div(other, self)

    def __neg__(self):
        from . import functional as F
        return F.neg(self)

    def __matmul__(self, other):
        from . import functional as F
        return F.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        from . import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def relu(self):
        from . import functional as F
        return F.relu(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=False, op="const")


def stop_gradient(x: Tensor) -> Tensor:
    """Value-transparent barrier: same array, no gradient to ``x``."""
    x = as_tensor(x)
    return Tensor(x.data, (x,), None, stop=True, requires_grad=False, op="stop_gradient", check=False)


class GradientMap(dict):
    """Parameter name -> gradient array.

    Registered parameters that received no gradient read back as exact zeros.
    """

    def __init__(self, grads: Mapping[str, np.ndarray], shapes: Mapping[str, tuple] | None = None):
        super().__init__(grads)
        self.shapes = dict(shapes or {})

    def __missing__(self, key):
        if key in self.shapes:
            return np.zeros(self.shapes[key])
        raise KeyError(key)

    def full(self) -> dict:
        """Dense mapping covering every registered parameter."""
        return {k: self[k] for k in self.shapes}


def _reachable(root: Tensor) -> list[Tensor]:
    seen = set()
    out = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.id in seen:
            continue
        seen.add(node.id)
        out.append(node)
        if not node.stop:
            stack.extend(p for p in node.parents if p.requires_grad)
    out.sort(key=lambda n: n.id, reverse=True)
    return out


def backward(loss: Tensor, params: Mapping[str, Tensor] | Iterable[Tensor] | None = None) -> GradientMap:
    """Gradients of a scalar ``loss`` with respect to every reachable parameter.

    Args:
        loss: scalar node.
        params: optional registry (mapping or iterable of parameter tensors);
            parameters listed here but unreachable get exact-zero gradients.

    Returns:
        GradientMap keyed by parameter name.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if params is None:
        registry = {}
    elif isinstance(params, Mapping):
        registry = {p.name: p for p in params.values()}
    else:
        registry = {p.name: p for p in params}
    shapes = {k: p.shape for k, p in registry.items()}

    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    result: dict[str, np.ndarray] = {}
    if not loss.requires_grad:
        return GradientMap(result, shapes)
    for node in _reachable(loss):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node.name is not None and not node.parents:
            if node.name in result:
                result[node.name] = result[node.name] + g
            else:
                result[node.name] = g
            continue
        if node.stop or node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(parent.id)
            grads[parent.id] = pg if prev is None else prev + pg
    for name, g in result.items():
        if name in shapes and g.shape != shapes[name]:
            raise ConfigError(f"gradient shape {g.shape} != parameter shape {shapes[name]} for {name}")
    return GradientMap(result, shapes)
