"""Dense tensors with reverse-mode automatic differentiation.

The operator set is deliberately small: 2d cross-correlation with untied
biases, max pooling, leaky rectification, global pooling by spatial sum,
a single linear output neuron, and mean squared error. That is everything
the networks in this package need; nothing else is provided.

The computation graph is implicit: each ``Tensor`` produced by an op keeps
references to its parents and a closure that routes gradients to them.
``backward()`` on a scalar walks that graph once in reverse topological
order. Tensors are treated as immutable after creation, so sharing them
across threads is safe; one graph is a single logical thread of control.

All arithmetic runs in the dtype of the inputs (float32 for training,
float64 for verification) with fixed, row-major accumulation order, so
repeated runs on the same platform are bit-identical.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, NumericError, UsageError

# (top, bottom, left, right) zero padding applied before a conv window scan
PadSpec = tuple[int, int, int, int]

NO_PAD: PadSpec = (0, 0, 0, 0)


class Tensor:
    """An n-dimensional float array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[], None]] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def backward(self, seed: Optional[float] = None) -> None:
        """Run reverse-mode differentiation from this scalar.

        ``seed`` is the gradient of the objective w.r.t. this tensor
        (default 1.0). Raises :class:`UsageError` when called on a
        non-scalar or on a tensor with no recorded graph.
        """
        if self.data.size != 1:
            raise UsageError("backward() requires a scalar tensor")
        if self._backward is None and not self._parents and not self.requires_grad:
            raise UsageError("backward() called on a tensor with no graph attached")
        order = _topo_order(self)
        self.grad = np.full_like(self.data, 1.0 if seed is None else seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward()

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


def _topo_order(root: Tensor) -> list[Tensor]:
    # Iterative DFS; insertion order makes the traversal deterministic.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, seed: Optional[float] = None) -> None:
    """Module-level alias for ``loss.backward(seed)``."""
    loss.backward(seed)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._parents):
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {what}")


def _batched(x: np.ndarray, want_ndim: int) -> tuple[np.ndarray, bool]:
    """View ``x`` with a leading batch axis; report whether one was added."""
    if x.ndim == want_ndim:
        return x, False
    if x.ndim == want_ndim - 1:
        return x[None], True
    raise ConfigurationError(
        f"expected a {want_ndim - 1}d or {want_ndim}d array, got shape {x.shape}"
    )


def conv_output_size(in_size: int, filt: int, stride: int, pad_total: int) -> int:
    """Spatial output extent of a window scan (floor division)."""
    span = in_size + pad_total - filt
    if span < 0:
        raise ConfigurationError(
            f"window {filt} does not fit input {in_size} with padding {pad_total}"
        )
    return span // stride + 1


def conv2d(
    x: Tensor,
    weights: Tensor,
    bias: Optional[Tensor],
    stride: int = 1,
    pad: PadSpec = NO_PAD,
    name: str = "conv2d",
) -> Tensor:
    """Cross-correlate ``x`` with ``weights`` and add an untied bias.

    ``x`` is ``[C_in,H,W]`` or ``[B,C_in,H,W]``; ``weights`` is
    ``[C_out,C_in,f,f]``. The bias carries one value per output channel
    *and* spatial position (``[C_out,H_out,W_out]``), broadcast over the
    batch. Padding is explicit per edge and zero-valued.
    """
    x, weights = _as_tensor(x), _as_tensor(weights)
    xd, squeezed = _batched(x.data, 4)
    wd = weights.data
    if wd.ndim != 4 or wd.shape[2] != wd.shape[3]:
        raise ConfigurationError(f"{name}: weights must be [C_out,C_in,f,f], got {wd.shape}")
    if xd.shape[1] != wd.shape[1]:
        raise ConfigurationError(
            f"{name}: input has {xd.shape[1]} channels but weights expect {wd.shape[1]}"
        )
    c_out, _, f, _ = wd.shape
    pt, pb, pl, pr = pad
    h_out = conv_output_size(xd.shape[2], f, stride, pt + pb)
    w_out = conv_output_size(xd.shape[3], f, stride, pl + pr)
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.data.shape != (c_out, h_out, w_out):
            raise ConfigurationError(
                f"{name}: untied bias must have shape {(c_out, h_out, w_out)}, "
                f"got {bias.data.shape}"
            )

    xp = np.pad(xd, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    windows = sliding_window_view(xp, (f, f), axis=(2, 3))[:, :, ::stride, ::stride]
    # windows: [B, C_in, H_out, W_out, f, f] -> contract with [C_out, C_in, f, f]
    out = np.tensordot(windows, wd, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out += bias.data
    _check_finite(out, name)

    result = Tensor(out[0] if squeezed else out)
    parents = [x, weights] + ([bias] if bias is not None else [])
    result._parents = tuple(parents)

    def _back() -> None:
        g = result.grad
        gb4 = g[None] if squeezed else g
        if bias is not None:
            _accumulate(bias, gb4.sum(axis=0))
        if weights.requires_grad or weights._parents:
            gw = np.empty_like(wd)
            for i in range(f):
                for j in range(f):
                    patch = xp[:, :, i : i + stride * h_out : stride,
                                j : j + stride * w_out : stride]
                    # [B,O,Ho,Wo] x [B,C,Ho,Wo] -> [O,C]
                    gw[:, :, i, j] = np.tensordot(gb4, patch, axes=([0, 2, 3], [0, 2, 3]))
            _accumulate(weights, gw)
        if x.requires_grad or x._parents:
            gxp = np.zeros_like(xp)
            gflat = gb4.transpose(0, 2, 3, 1).reshape(-1, c_out)
            for i in range(f):
                for j in range(f):
                    contrib = gflat @ wd[:, :, i, j]
                    contrib = contrib.reshape(gb4.shape[0], h_out, w_out, -1)
                    gxp[:, :, i : i + stride * h_out : stride,
                        j : j + stride * w_out : stride] += contrib.transpose(0, 3, 1, 2)
            gx = gxp[:, :, pt : pt + xd.shape[2], pl : pl + xd.shape[3]]
            _accumulate(x, gx[0] if squeezed else gx)

    result._backward = _back
    return result


def maxpool(x: Tensor, window: int, stride: int, name: str = "maxpool") -> Tensor:
    """Max pool over ``window``x``window`` patches; floor mode, no padding.

    The backward pass routes each patch's gradient to the first (row-major)
    position attaining the maximum.
    """
    x = _as_tensor(x)
    xd, squeezed = _batched(x.data, 4)
    b, c, h, w = xd.shape
    if window > h or window > w:
        raise ConfigurationError(f"{name}: window {window} exceeds input {h}x{w}")
    h_out = conv_output_size(h, window, stride, 0)
    w_out = conv_output_size(w, window, stride, 0)

    patches = sliding_window_view(xd, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = patches.reshape(b, c, h_out, w_out, window * window)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    result = Tensor(out[0] if squeezed else out)
    result._parents = (x,)

    def _back() -> None:
        g = result.grad
        gb4 = g[None] if squeezed else g
        gx = np.zeros_like(xd)
        bi, ci, hi, wi = np.ogrid[:b, :c, :h_out, :w_out]
        rows = hi * stride + arg // window
        cols = wi * stride + arg % window
        np.add.at(gx, (np.broadcast_to(bi, arg.shape), np.broadcast_to(ci, arg.shape),
                       rows, cols), gb4)
        _accumulate(x, gx[0] if squeezed else gx)

    result._backward = _back
    return result


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    """x if x >= 0 else slope*x, elementwise."""
    x = _as_tensor(x)
    mask = x.data >= 0
    out = np.where(mask, x.data, x.data * x.data.dtype.type(slope))
    result = Tensor(out)
    result._parents = (x,)

    def _back() -> None:
        scale = np.where(mask, x.data.dtype.type(1), x.data.dtype.type(slope))
        _accumulate(x, result.grad * scale)

    result._backward = _back
    return result


def global_average_pool(x: Tensor) -> Tensor:
    """Collapse each feature map to the sum of its entries.

    Note this is a plain spatial sum, not a mean: the constant 1/(H*W)
    factor is left for the following linear layer's weights to absorb.
    The backward pass broadcasts the incoming gradient uniformly over
    each map.
    """
    x = _as_tensor(x)
    xd, squeezed = _batched(x.data, 4)
    out = xd.sum(axis=(2, 3))
    result = Tensor(out[0] if squeezed else out)
    result._parents = (x,)

    def _back() -> None:
        g = result.grad
        gb = g[None] if squeezed else g
        gx = np.broadcast_to(gb[:, :, None, None], xd.shape)
        _accumulate(x, gx[0] if squeezed else gx)

    result._backward = _back
    return result


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a fixed constant (used for the head's absorbed 1/(H*W))."""
    x = _as_tensor(x)
    c = x.data.dtype.type(factor)
    result = Tensor(x.data * c)
    result._parents = (x,)

    def _back() -> None:
        _accumulate(x, result.grad * c)

    result._backward = _back
    return result


def dense(x: Tensor, weights: Tensor, bias: Optional[Tensor] = None,
          name: str = "dense") -> Tensor:
    """Single output neuron: y = sum_k x_k * w_k + b.

    ``x`` is ``[K]`` or ``[B,K]``, ``weights`` is ``[1,K]``, ``bias`` is
    ``[1]``. Accumulation runs over k with numpy's fixed pairwise order,
    so the result is reproducible bit-for-bit.
    """
    x, weights = _as_tensor(x), _as_tensor(weights)
    xd, squeezed = _batched(x.data, 2)
    wd = weights.data
    if wd.shape != (1, xd.shape[1]):
        raise ConfigurationError(
            f"{name}: weights must have shape (1, {xd.shape[1]}), got {wd.shape}"
        )
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.data.shape != (1,):
            raise ConfigurationError(f"{name}: bias must have shape (1,), got {bias.data.shape}")
    out = (xd * wd[0]).sum(axis=1, keepdims=True)
    if bias is not None:
        out = out + bias.data
    _check_finite(out, name)

    result = Tensor(out[0] if squeezed else out)
    result._parents = tuple([x, weights] + ([bias] if bias is not None else []))

    def _back() -> None:
        g = result.grad
        gb = g[None] if squeezed else g          # [B,1]
        _accumulate(x, gb * wd[0])
        _accumulate(weights, (gb * xd).sum(axis=0, keepdims=True))
        if bias is not None:
            _accumulate(bias, gb.sum(axis=0))

    result._backward = _back
    return result


def mse_loss(pred: Tensor, target: Union[Tensor, np.ndarray, Sequence[float]]) -> Tensor:
    """Mean squared error over all entries of ``pred``."""
    pred = _as_tensor(pred)
    tgt = target.data if isinstance(target, Tensor) else np.asarray(target, pred.data.dtype)
    if tgt.shape != pred.data.shape:
        raise ConfigurationError(
            f"mse_loss: prediction shape {pred.data.shape} != target shape {tgt.shape}"
        )
    diff = pred.data - tgt
    out = np.asarray((diff * diff).mean(), dtype=pred.data.dtype)
    _check_finite(out, "mse_loss")

    result = Tensor(out)
    result._parents = (pred,)

    def _back() -> None:
        _accumulate(pred, result.grad * 2.0 * diff / diff.size)

    result._backward = _back
    return result
