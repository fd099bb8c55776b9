"""
Dense float64 tensor with reverse-mode differentiation.

Every differentiable operation is a `Function` subclass: `forward` receives the
raw numpy arrays of its inputs, `backward` receives d(loss)/d(output) and returns
one gradient per input (None for inputs that need none). `Function.apply` wraps
the result in a `Tensor` that remembers the function, which is all `backward`
needs to walk the graph.
"""
import logging
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np

from inffusion.errors import ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence, float, int]


class Function:
    """Base class for differentiable operations"""

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*tensors)
        out = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = any(t.requires_grad for t in tensors)
        return Tensor(out, requires_grad=requires_grad, _ctx=func if requires_grad else None)

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """Sum a broadcast gradient back down to `shape`"""
        if grad.shape == shape:
            return grad
        extra = grad.ndim - len(shape)
        if extra > 0:
            grad = grad.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
        if axes:
            grad = grad.sum(axis=axes, keepdims=True)
        return grad.reshape(shape)


class Tensor:
    """
    Dense N-dimensional float64 array that can take part in a differentiation graph.

    The data buffer is treated as immutable once built; only `grad` and optimizer
    updates of parameter leaves write into tensors.
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _ctx: Optional[Function] = None,
    ):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._ctx = _ctx

    # -- introspection ------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}", axis="size")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # -- differentiation ----------------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Accumulate d(self)/d(t) into `t.grad` for every reachable tensor with
        requires_grad. Gradients add up across calls until cleared.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(
                    f"backward() without a seed gradient needs a scalar loss, got shape {self.shape}",
                    axis="loss",
                )
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)

        order = _topological_order(self)
        pending = {id(self): grad}
        for node in reversed(order):
            node_grad = pending.pop(id(node), None)
            if node_grad is None:
                continue
            if node.requires_grad:
                node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
            if node._ctx is None:
                continue
            parent_grads = node._ctx.backward(node_grad)
            for parent, parent_grad in zip(node._ctx.tensors, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other: "TensorLike") -> "Tensor":
        from inffusion.core import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: "TensorLike") -> "Tensor":
        from inffusion.core import ops
        return ops.sub(self, other)

    def __rsub__(self, other: "TensorLike") -> "Tensor":
        from inffusion.core import ops
        return ops.sub(other, self)

    def __mul__(self, other: "TensorLike") -> "Tensor":
        from inffusion.core import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from inffusion.core import ops
        return ops.mul(self, -1.0)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        from inffusion.core import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        from inffusion.core import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        from inffusion.core import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from inffusion.core import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)


TensorLike = Union[Tensor, ArrayLike]


def as_tensor(value: TensorLike) -> Tensor:
    """Wrap constants; tensors pass through untouched"""
    return value if isinstance(value, Tensor) else Tensor(value)


def _topological_order(root: Tensor) -> List[Tensor]:
    """Inputs-before-outputs ordering of the graph under `root` (iterative DFS)"""
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.tensors:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order
