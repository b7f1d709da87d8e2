"""Dense float32 tensors with reverse-mode autodiff on a define-by-run tape.

Rank is capped at 4 and image layout is channels-major (C,H,W or N,C,H,W).
Every primitive has a raw numpy implementation (dtype-polymorphic, used by
the 64-bit finite-difference oracles in the tests) and a taped wrapper that
records the backward closure when gradients are required.
"""

from __future__ import annotations

import warnings

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MAX_RANK = 4

# Module-level switch for input validation (shape checks always run; this
# gates the non-finite scans, which cost a full pass over each operand).
_VALIDATE_FINITE = True


def set_validation(enabled: bool) -> bool:
    """Toggle non-finite input scanning; returns the previous setting."""
    global _VALIDATE_FINITE
    prev = _VALIDATE_FINITE
    _VALIDATE_FINITE = bool(enabled)
    return prev


class ShapeError(ValueError):
    pass


class NonFiniteError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Tensor and tape


class Tensor:
    """A dense float32 array plus autodiff metadata."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim > MAX_RANK:
            raise ShapeError(f"rank {arr.ndim} exceeds max rank {MAX_RANK}")
        if arr.ndim >= 1 and min(arr.shape) < 1:
            raise ShapeError(f"all extents must be >= 1, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"


class _Node:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out          # result Tensor
        self.inputs = inputs    # tuple of operand Tensors
        self.backward_fn = backward_fn  # grad_out -> tuple of grads (or None)


class Tape:
    """Ordered record of primitive ops; execution order is topological.

    Use as a context manager around the forward pass, then call
    ``backward(loss)`` to get a gradient map for every tensor that
    requires grad. The tape is consumed by ``backward``.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self):
        _push_tape(self)
        return self

    def __exit__(self, *exc):
        _pop_tape(self)
        return False

    def record(self, out: Tensor, inputs: tuple, backward_fn) -> None:
        self.nodes.append(_Node(out, inputs, backward_fn))

    def backward(self, loss: Tensor) -> dict:
        """Reverse sweep from a scalar loss.

        Returns {tensor: Tensor gradient} for every requires_grad tensor
        reachable from the loss. A loss with no path to any parameter
        yields an empty map and a warning.
        """
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward()")
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        out_map: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            in_grads = node.backward_fn(g)
            for t, ig in zip(node.inputs, in_grads):
                if ig is None:
                    continue
                prev = grads.get(id(t))
                grads[id(t)] = ig if prev is None else prev + ig
                out_map[id(t)] = t
        result = {}
        for tid, t in out_map.items():
            if t.requires_grad and tid in grads:
                result[t] = Tensor(grads[tid])
        self.nodes.clear()
        if not result:
            warnings.warn("backward: loss is detached from all parameters", RuntimeWarning)
        return result


_TAPE_STACK: list[Tape] = []


def _push_tape(t: Tape) -> None:
    _TAPE_STACK.append(t)


def _pop_tape(t: Tape) -> None:
    if not _TAPE_STACK or _TAPE_STACK[-1] is not t:
        raise RuntimeError("tape stack corrupted")
    _TAPE_STACK.pop()


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _check_finite(*arrays) -> None:
    if not _VALIDATE_FINITE:
        return
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("operand contains NaN or Inf")


def _make(out_data, inputs: tuple, backward_fn) -> Tensor:
    req = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=req)
    tape = _active_tape()
    if tape is not None and req:
        tape.record(out, inputs, backward_fn)
    return out


def _sum_to_shape(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# Raw numpy kernels (dtype-polymorphic; shared by forward and the FD oracles)


def raw_silu(x):
    z = np.exp(-np.abs(x))
    sig = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return x * sig


def _silu_grad(x):
    z = np.exp(-np.abs(x))
    sig = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return sig * (1.0 + x * (1.0 - sig))


def conv2d_out_shape(h: int, w: int, kh: int, kw: int, stride: int, pad: int) -> tuple:
    return ((h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1)


def _im2col(x, kh, kw, stride, pad):
    # x: (N,C,H,W) -> (N*OH*OW, C*kh*kw), plus (OH, OW)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    if stride != 1:
        win = win[:, :, ::stride, ::stride]
    n, c, oh, ow = win.shape[:4]
    col = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return col.reshape(n * oh * ow, c * kh * kw), (oh, ow)


def raw_conv2d(x, k, stride: int = 1, pad: int = 0):
    """Cross-correlation of (N,C,H,W) with kernel (O,C,kh,kw) -> (N,O,OH,OW)."""
    n = x.shape[0]
    o, _, kh, kw = k.shape
    col, (oh, ow) = _im2col(x, kh, kw, stride, pad)
    out = col @ k.reshape(o, -1).T
    return np.ascontiguousarray(out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2))


def _conv2d_backward_data(g, k, x_shape, stride, pad):
    # g: (N,O,OH,OW); returns dX (N,C,H,W) via conv with the flipped kernel.
    _, _, h, w = x_shape
    _, _, kh, kw = k.shape
    if stride != 1:
        n, o, oh, ow = g.shape
        dil = np.zeros((n, o, (oh - 1) * stride + 1, (ow - 1) * stride + 1), dtype=g.dtype)
        dil[:, :, ::stride, ::stride] = g
        g = dil
    # Pad out to recover full input extent (right/bottom may need extra when
    # stride does not divide the input span evenly).
    ph, pw = kh - 1 - pad, kw - 1 - pad
    eh = h + 2 * pad - kh - (g.shape[2] - 1)
    ew = w + 2 * pad - kw - (g.shape[3] - 1)
    g = np.pad(g, ((0, 0), (0, 0), (ph, ph + eh), (pw, pw + ew)))
    kf = np.ascontiguousarray(k[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return raw_conv2d(g, kf, stride=1, pad=0)


def raw_avgpool2x(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def raw_upsample2x(x):
    n, c, h, w = x.shape
    out = np.broadcast_to(x[:, :, :, None, :, None], (n, c, h, 2, w, 2))
    return np.ascontiguousarray(out).reshape(n, c, 2 * h, 2 * w)


# ---------------------------------------------------------------------------
# Primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; broadcasting covers the plain per-channel bias path."""
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} are incompatible") from None
    if out.ndim > MAX_RANK:
        raise ShapeError(f"add: result rank {out.ndim} exceeds {MAX_RANK}")
    _check_finite(a.data, b.data)

    def bwd(g):
        return (_sum_to_shape(g, a.shape) if a.requires_grad else None,
                _sum_to_shape(g, b.shape) if b.requires_grad else None)

    return _make(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} are incompatible") from None
    if out.ndim > MAX_RANK:
        raise ShapeError(f"mul: result rank {out.ndim} exceeds {MAX_RANK}")
    _check_finite(a.data, b.data)
    ad, bd = a.data, b.data

    def bwd(g):
        return (_sum_to_shape(g * bd, a.shape) if a.requires_grad else None,
                _sum_to_shape(g * ad, b.shape) if b.requires_grad else None)

    return _make(out, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    s = np.float32(s)
    if not np.isfinite(s):
        raise NonFiniteError("scale: factor is not finite")
    _check_finite(a.data)

    def bwd(g):
        return (g * s,)

    return _make(a.data * s, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: needs two rank-2 tensors, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims disagree: {a.shape} vs {b.shape}")
    _check_finite(a.data, b.data)
    ad, bd = a.data, b.data

    def bwd(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return _make(ad @ bd, (a, b), bwd)


def conv2d(x: Tensor, k: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding; kernel is (out, in, kh, kw)."""
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeError(f"conv2d: input must be rank 3 or 4, got {x.shape}")
    if k.data.ndim != 4:
        raise ShapeError(f"conv2d: kernel must be rank 4, got {k.shape}")
    if xd.shape[1] != k.shape[1]:
        raise ShapeError(f"conv2d: input channels {x.shape} vs kernel {k.shape}")
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: bad stride/pad ({stride}, {pad})")
    kh, kw = k.shape[2], k.shape[3]
    if xd.shape[2] + 2 * pad < kh or xd.shape[3] + 2 * pad < kw:
        raise ShapeError(f"conv2d: kernel {k.shape} larger than padded input {x.shape}")
    _check_finite(xd, k.data)

    n = xd.shape[0]
    o = k.shape[0]
    col, (oh, ow) = _im2col(xd, kh, kw, stride, pad)
    out = col @ k.data.reshape(o, -1).T
    out = np.ascontiguousarray(out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2))

    kd = k.data
    x_shape = xd.shape

    def bwd(g):
        if squeeze:
            g = g[None]
        gx = gk = None
        if k.requires_grad:
            gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
            gk = (gm.T @ col).reshape(kd.shape)
        if x.requires_grad:
            gx = _conv2d_backward_data(g, kd, x_shape, stride, pad)
            if squeeze:
                gx = gx[0]
        return (gx, gk)

    return _make(out[0] if squeeze else out, (x, k), bwd)


def avgpool2x(x: Tensor) -> Tensor:
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeError(f"avgpool2x: input must be rank 3 or 4, got {x.shape}")
    if xd.shape[2] % 2 or xd.shape[3] % 2:
        raise ShapeError(f"avgpool2x: spatial dims must be even, got {x.shape}")
    _check_finite(xd)
    out = raw_avgpool2x(xd)

    def bwd(g):
        if squeeze:
            g = g[None]
        n, c, oh, ow = g.shape
        gx = np.broadcast_to(g[:, :, :, None, :, None] * np.float32(0.25),
                             (n, c, oh, 2, ow, 2))
        gx = np.ascontiguousarray(gx).reshape(n, c, 2 * oh, 2 * ow)
        return (gx[0] if squeeze else gx,)

    return _make(out[0] if squeeze else out, (x,), bwd)


def nearest_upsample2x(x: Tensor) -> Tensor:
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeError(f"nearest_upsample2x: input must be rank 3 or 4, got {x.shape}")
    _check_finite(xd)
    out = raw_upsample2x(xd)

    def bwd(g):
        if squeeze:
            g = g[None]
        n, c, h2, w2 = g.shape
        gx = g.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
        return (gx[0] if squeeze else gx,)

    return _make(out[0] if squeeze else out, (x,), bwd)


def silu(x: Tensor) -> Tensor:
    _check_finite(x.data)
    xd = x.data

    def bwd(g):
        return (g * _silu_grad(xd),)

    return _make(raw_silu(xd), (x,), bwd)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != b.data.ndim or a.data.ndim not in (3, 4):
        raise ShapeError(f"concat_channels: ranks must both be 3 or 4, got {a.shape} and {b.shape}")
    axis = 0 if a.data.ndim == 3 else 1
    sa = list(a.shape)
    sb = list(b.shape)
    sa[axis] = sb[axis] = 0
    if sa != sb:
        raise ShapeError(f"concat_channels: non-channel dims differ: {a.shape} vs {b.shape}")
    _check_finite(a.data, b.data)
    ca = a.shape[axis]

    def bwd(g):
        sl_a = tuple(slice(None) if i != axis else slice(0, ca) for i in range(g.ndim))
        sl_b = tuple(slice(None) if i != axis else slice(ca, None) for i in range(g.ndim))
        return (np.ascontiguousarray(g[sl_a]) if a.requires_grad else None,
                np.ascontiguousarray(g[sl_b]) if b.requires_grad else None)

    return _make(np.concatenate([a.data, b.data], axis=axis), (a, b), bwd)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if len(shape) > MAX_RANK:
        raise ShapeError(f"reshape: rank {len(shape)} exceeds {MAX_RANK}")
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    old = x.shape

    def bwd(g):
        return (g.reshape(old),)

    return _make(x.data.reshape(shape), (x,), bwd)


def tsum(x: Tensor) -> Tensor:
    """Sum of all elements, as a shape-(1,) tensor."""
    _check_finite(x.data)
    shape = x.shape

    def bwd(g):
        return (np.full(shape, g.reshape(-1)[0], dtype=np.float32),)

    return _make(np.asarray([x.data.sum(dtype=np.float32)]), (x,), bwd)


def tmean(x: Tensor) -> Tensor:
    """Mean of all elements, as a shape-(1,) tensor."""
    _check_finite(x.data)
    shape = x.shape
    inv = np.float32(1.0 / x.size)

    def bwd(g):
        return (np.full(shape, g.reshape(-1)[0] * inv, dtype=np.float32),)

    return _make(np.asarray([x.data.mean(dtype=np.float32)]), (x,), bwd)


def zeros_like(x: Tensor) -> Tensor:
    return Tensor(np.zeros_like(x.data))
