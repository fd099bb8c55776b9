"""
Differentiable operator set.

Image tensors handed to `conv2d` are laid out [N, C, H, W]; the fusion code keeps
feature maps as [H, W, C] and converts at the convolution boundary.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from inffusion.core.tensor import Function, Tensor, TensorLike, as_tensor
from inffusion.errors import DivisibilityError, ShapeError, UnknownModeError

Axis = Optional[Union[int, Tuple[int, ...]]]


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (
            self.unbroadcast(grad * self.b, self.a.shape),
            self.unbroadcast(grad * self.a, self.b.shape),
        )


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast", axis="broadcast")


def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return Add.apply(a, b)


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return Sub.apply(a, b)


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return Mul.apply(a, b)


class Relu(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad):
        # subgradient at 0 is 0
        return (grad * self.mask,)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


# ---------------------------------------------------------------------------
# reductions and shape plumbing
# ---------------------------------------------------------------------------

class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(x.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        out = np.asarray(x.mean(axis=axis, keepdims=keepdims))
        self.count = x.size // max(out.size, 1)
        return out

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad / self.count, self.shape).copy(),)


class Reshape(Function):
    def forward(self, x, shape=()):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x, axes=()):
        self.axes = axes
        return np.ascontiguousarray(np.transpose(x, axes))

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Take(Function):
    """Gather rows along axis 0 by an integer index array"""

    def forward(self, x, indices=None):
        self.shape, self.indices = x.shape, indices
        return x[indices]

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=np.float64)
        np.add.at(out, self.indices, grad)
        return (out,)


class Concat(Function):
    def forward(self, *arrays, axis=-1):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=self.axis))


class SliceLast(Function):
    def forward(self, x, start=0, stop=None):
        self.shape, self.start, self.stop = x.shape, start, stop
        return x[..., start:stop].copy()

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=np.float64)
        out[..., self.start:self.stop] = grad
        return (out,)


def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        np.empty(x.shape, dtype=np.bool_).reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}", axis="size")
    return Reshape.apply(x, shape=shape)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"axes {axes} are not a permutation for rank {x.ndim}", axis="axes")
    return Transpose.apply(x, axes=axes)


def take(x: Tensor, indices: np.ndarray) -> Tensor:
    """x[indices] along the leading axis; gradients scatter-add back"""
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size and (indices.min() < 0 or indices.max() >= x.shape[0]):
        raise ShapeError(f"row index out of range for leading extent {x.shape[0]}", axis="rows")
    return Take.apply(x, indices=indices)


def concat(parts: Sequence[TensorLike], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat needs at least one part", axis="parts")
    if len(parts) == 1:
        return parts[0]
    ref = parts[0]
    ax = axis % ref.ndim
    for i, p in enumerate(parts[1:], start=1):
        if p.ndim != ref.ndim:
            raise ShapeError(f"part {i} has rank {p.ndim}, expected {ref.ndim}", axis="rank")
        for d in range(ref.ndim):
            if d != ax and p.shape[d] != ref.shape[d]:
                raise ShapeError(
                    f"part {i} has extent {p.shape[d]} on axis {d}, expected {ref.shape[d]}",
                    axis=str(d),
                )
    return Concat.apply(*parts, axis=ax)


def concat_channels(parts: Sequence[TensorLike]) -> Tensor:
    """Concatenate along the trailing (channel) axis, preserving part order"""
    return concat(parts, axis=-1)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    return SliceLast.apply(x, start=start, stop=stop)


def split_channels(x: Tensor, sizes: Sequence[int]) -> Tuple[Tensor, ...]:
    """Inverse of concat_channels for the given part widths"""
    if int(np.sum(sizes)) != x.shape[-1]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover {x.shape[-1]} channels", axis="channels")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return tuple(slice_channels(x, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]))


def stack(parts: Sequence[TensorLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    ax = axis % (parts[0].ndim + 1)
    expanded = [reshape(p, p.shape[:ax] + (1,) + p.shape[ax:]) for p in parts]
    return concat(expanded, axis=ax)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class Linear(Function):
    def forward(self, x, w, b):
        self.x, self.w = x, w
        return x @ w.T + b

    def backward(self, grad):
        d_out, d_in = self.w.shape
        g2 = grad.reshape(-1, d_out)
        x2 = self.x.reshape(-1, d_in)
        return grad @ self.w, g2.T @ x2, g2.sum(axis=0)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map over the trailing axis: x @ weight.T + bias"""
    if weight.ndim != 2:
        raise ShapeError(f"weight must be [D_out, D_in], got {weight.shape}", axis="weight")
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            f"trailing axis {x.shape[-1]} does not match D_in={weight.shape[1]}",
            axis="D_in", expected=weight.shape[1], got=x.shape[-1],
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} != ({weight.shape[0]},)", axis="D_out")
    return Linear.apply(x, weight, bias)


class Conv2d(Function):
    """Cross-correlation via im2col; kernel [C_out, C_in, k, k]"""

    def forward(self, x, w, b, padding=0):
        n, c, _, _ = x.shape
        c_out, _, k, _ = w.shape
        self.x_shape, self.w, self.padding, self.k = x.shape, w, padding, k
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        self.xp_shape = xp.shape
        # [N, C, H', W', k, k] -> [N, H', W', C, k, k]
        windows = sliding_window_view(xp, (k, k), axis=(2, 3))
        h_out, w_out = windows.shape[2], windows.shape[3]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h_out * w_out, c * k * k)
        self.cols = cols
        self.out_hw = (h_out, w_out)
        out = cols @ w.reshape(c_out, -1).T + b
        return np.ascontiguousarray(out.reshape(n, h_out, w_out, c_out).transpose(0, 3, 1, 2))

    def backward(self, grad):
        n, c, h, w_in = self.x_shape
        c_out = self.w.shape[0]
        k, p = self.k, self.padding
        h_out, w_out = self.out_hw
        g2 = grad.transpose(0, 2, 3, 1).reshape(-1, c_out)
        d_w = (g2.T @ self.cols).reshape(self.w.shape)
        d_b = g2.sum(axis=0)
        d_cols = (g2 @ self.w.reshape(c_out, -1)).reshape(n, h_out, w_out, c, k, k)
        d_xp = np.zeros(self.xp_shape, dtype=np.float64)
        for i in range(k):
            for j in range(k):
                d_xp[:, :, i:i + h_out, j:j + w_out] += d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        d_x = d_xp[:, :, p:p + h, p:p + w_in] if p else d_xp
        return d_x, d_w, d_b


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, padding: int = 0) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be [N, C, H, W], got {x.shape}", axis="rank")
    if kernel.ndim != 4:
        raise ShapeError(f"kernel must be [C_out, C_in, k, k], got {kernel.shape}", axis="kernel")
    c_out, c_in, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size, got {kh}x{kw}", axis="k")
    if x.shape[1] != c_in:
        raise ShapeError(
            f"input has {x.shape[1]} channels, kernel expects {c_in}",
            axis="C_in", expected=c_in, got=x.shape[1],
        )
    if bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} != ({c_out},)", axis="C_out")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}", axis="padding")
    for axis_name, extent in (("H", x.shape[2]), ("W", x.shape[3])):
        if extent + 2 * padding - kh + 1 < 1:
            raise ShapeError(f"{axis_name}={extent} too small for kernel {kh} with padding {padding}", axis=axis_name)
    return Conv2d.apply(x, kernel, bias, padding=padding)


# ---------------------------------------------------------------------------
# pooling, normalization, losses
# ---------------------------------------------------------------------------

class MeanPool(Function):
    def forward(self, x, r=1):
        self.r = r
        *lead, h, w = x.shape
        blocks = x.reshape(*lead, h // r, r, w // r, r)
        return blocks.mean(axis=(-3, -1))

    def backward(self, grad):
        r = self.r
        up = np.repeat(np.repeat(grad, r, axis=-2), r, axis=-1)
        return (up / (r * r),)


def mean_pool(x: Tensor, r: int) -> Tensor:
    """Mean over non-overlapping r x r blocks of the two trailing axes"""
    if x.ndim < 2:
        raise ShapeError(f"mean_pool needs at least two axes, got {x.shape}", axis="rank")
    if r < 1:
        raise DivisibilityError(f"pool factor must be >= 1, got {r}", axis="r")
    h, w = x.shape[-2:]
    if h % r or w % r:
        raise DivisibilityError(f"extents {h}x{w} are not divisible by r={r}", axis="H" if h % r else "W", r=r)
    return MeanPool.apply(x, r=r)


class SoftmaxLast(Function):
    def forward(self, x):
        z = np.exp(x - x.max(axis=-1, keepdims=True))
        self.s = z / z.sum(axis=-1, keepdims=True)
        return self.s

    def backward(self, grad):
        s = self.s
        return (s * (grad - (grad * s).sum(axis=-1, keepdims=True)),)


def softmax_lastdim(x: Tensor) -> Tensor:
    return SoftmaxLast.apply(x)


class NormalizeLast(Function):
    """x / ||x|| along the trailing axis; rows with zero norm map to 0"""

    def forward(self, x, eps=0.0):
        norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
        self.safe = norm > eps
        self.norm = np.where(self.safe, norm, 1.0)
        self.y = np.where(self.safe, x / self.norm, 0.0)
        return self.y

    def backward(self, grad):
        y = self.y
        d = (grad - y * (grad * y).sum(axis=-1, keepdims=True)) / self.norm
        return (np.where(self.safe, d, 0.0),)


def normalize_lastdim(x: Tensor, eps: float = 0.0) -> Tensor:
    return NormalizeLast.apply(x, eps=eps)


class L1Loss(Function):
    def forward(self, pred, target, reduction="mean"):
        self.diff = pred - target
        self.scale = 1.0 / pred.size if reduction == "mean" else 1.0
        return np.asarray(np.abs(self.diff).sum() * self.scale)

    def backward(self, grad):
        # sign subgradient, 0 at ties
        g = np.sign(self.diff) * (grad * self.scale)
        return g, -g


def l1_loss(pred: Tensor, target: TensorLike, reduction: str = "mean") -> Tensor:
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} differ", axis="shape")
    if reduction not in ("mean", "sum"):
        raise UnknownModeError(f"unknown reduction {reduction!r}", mode=reduction)
    return L1Loss.apply(pred, target, reduction=reduction)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

class Resample(Function):
    """out[H, W, C] = A_h @ x[h, w, C] @ A_w^T with fixed interpolation matrices"""

    def forward(self, x, a_h=None, a_w=None):
        self.a_h, self.a_w = a_h, a_w
        return np.einsum("Hh,hwc,Ww->HWc", a_h, x, a_w, optimize=True)

    def backward(self, grad):
        return (np.einsum("Hh,HWc,Ww->hwc", self.a_h, grad, self.a_w, optimize=True),)


def resample(x: Tensor, a_h: np.ndarray, a_w: np.ndarray) -> Tensor:
    if x.ndim != 3:
        raise ShapeError(f"resample expects [h, w, C], got {x.shape}", axis="rank")
    if a_h.shape[1] != x.shape[0] or a_w.shape[1] != x.shape[1]:
        raise ShapeError(
            f"interpolation matrices {a_h.shape}/{a_w.shape} do not fit input {x.shape}", axis="h"
        )
    return Resample.apply(x, a_h=a_h, a_w=a_w)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """
    [N, C*r*r, H, W] -> [N, C, H*r, W*r].

    Output (c, h*r + i, w*r + j) reads input channel c*r*r + i*r + j at (h, w).
    """
    n, crr, h, w = x.shape
    if crr % (r * r):
        raise DivisibilityError(f"{crr} channels not divisible by r^2={r * r}", axis="C", r=r)
    c = crr // (r * r)
    y = reshape(x, (n, c, r, r, h, w))
    y = transpose(y, (0, 1, 4, 2, 5, 3))
    return reshape(y, (n, c, h * r, w * r))


# ---------------------------------------------------------------------------
# layout helpers
# ---------------------------------------------------------------------------

def hwc_to_nchw(x: Tensor) -> Tensor:
    h, w, c = x.shape
    return reshape(transpose(x, (2, 0, 1)), (1, c, h, w))


def nchw_to_hwc(x: Tensor) -> Tensor:
    _, c, h, w = x.shape
    return transpose(reshape(x, (c, h, w)), (1, 2, 0))
