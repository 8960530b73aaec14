"""Minimal reverse-mode automatic differentiation on numpy arrays.

Design points:
  * Values are float64 arrays, but persistent state (parameters, optimizer
    moments) is snapped to the float32 grid after every optimizer step, so
    float32 checkpoint payloads round-trip losslessly and a resumed run is
    bit-identical to an uninterrupted one.
  * The operator set is closed and small; every op records a pullback and
    is checked against central finite differences in the test suite.
  * Broadcasting is limited to scalar-with-tensor. Anything richer (bias
    adds, normalization constants) is materialized to full shape or folded
    into the owning op.
  * Reductions use numpy's deterministic row-major pairwise summation, so
    identical inputs give bit-identical results within a process.
"""

from __future__ import annotations

from contextlib import contextmanager
from math import ceil

import numpy as np

from .errors import DomainError

GATE_FLOOR = 1.04
GATE_SPAN = 3.6
# the literal, not GATE_FLOOR + GATE_SPAN: that sum rounds to 4.64 + 1 ulp,
# and the scale endpoints must compare clean against user-facing literals
GATE_CEIL = 4.64

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (forward values only)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def f32_grid(x: np.ndarray) -> np.ndarray:
    """Snap float64 values to the nearest float32-representable values."""
    return np.asarray(x, dtype=np.float64).astype(np.float32).astype(np.float64)


class Tensor:
    """A value in the computation graph.

    grad accumulates (+=) across backward calls on leaf tensors with
    requires_grad set; zero_grad resets it exactly.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_pullback")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._pullback = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DomainError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        """Populate grad for every reachable requires_grad leaf."""
        if self.data.size != 1:
            raise DomainError(f"backward() requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise DomainError("backward() on a tensor with no gradient path")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        # Pullbacks may return views of (or the very same) upstream gradient
        # array, so an adjoint is copied before its first in-place update.
        adjoint: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        owned: set[int] = {id(self)}
        for node in reversed(topo):
            g = adjoint.pop(id(node), None)
            owned.discard(id(node))
            if g is None:
                continue
            if node._pullback is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._pullback(g)):
                if not parent.requires_grad or pg is None:
                    continue
                pid = id(parent)
                acc = adjoint.get(pid)
                if acc is None:
                    adjoint[pid] = pg
                elif pid in owned:
                    acc += pg
                else:
                    fresh = acc + pg
                    adjoint[pid] = fresh
                    owned.add(pid)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def square(self):
        return square(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], pullback) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._pullback = pullback
    return out


def _elementwise_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise DomainError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    """Collapse a gradient onto a scalar operand's shape."""
    if g.shape == tuple(shape):
        return g
    return np.sum(g).reshape(shape) if np.prod(shape, dtype=int) == 1 else g


# -- arithmetic ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _elementwise_shapes(a, b, "add")

    def pullback(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _make(a.data + b.data, (a, b), pullback)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _elementwise_shapes(a, b, "mul")
    ad, bd = a.data, b.data

    def pullback(g):
        return _reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)

    return _make(ad * bd, (a, b), pullback)


def square(x) -> Tensor:
    x = _as_tensor(x)
    xd = x.data

    def pullback(g):
        return (2.0 * xd * g,)

    return _make(xd * xd, (x,), pullback)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DomainError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def pullback(g):
        return g @ bd.T, ad.T @ g

    return _make(ad @ bd, (a, b), pullback)


# -- activations -----------------------------------------------------------


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def pullback(g):
        return (g * mask,)

    return _make(np.where(mask, x.data, 0.0), (x,), pullback)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    s = _stable_sigmoid(x.data)

    def pullback(g):
        return (g * s * (1.0 - s),)

    return _make(s, (x,), pullback)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    t = np.tanh(x.data)

    def pullback(g):
        return (g * (1.0 - t * t),)

    return _make(t, (x,), pullback)


def clamp_scale_gate(x) -> Tensor:
    """Affine sigmoid gate mapping any real to the open quality interval.

    The sigmoid value is clipped a hair inside (0, 1) so the output can
    never round onto the interval endpoints, keeping the bound strict for
    arbitrarily saturated inputs.
    """
    x = _as_tensor(x)
    s = np.clip(_stable_sigmoid(x.data), 1e-12, 1.0 - 1e-12)

    def pullback(g):
        return (g * GATE_SPAN * s * (1.0 - s),)

    return _make(GATE_FLOOR + GATE_SPAN * s, (x,), pullback)


_TANH_CEIL = 1.0 - 1e-12


def tanhc(x) -> Tensor:
    """Smooth gain tanh(x)/x for x >= 0, with tanhc(0) = 1.

    tanh(x) is capped just below 1 so that a vector scaled by this gain
    keeps magnitude strictly under 1 even after rounding; past the cap the
    implemented (and differentiated) function is (1-1e-12)/x.
    """
    x = _as_tensor(x)
    xd = x.data
    t = np.tanh(xd)
    capped = t >= _TANH_CEIL
    safe = np.where(xd == 0.0, 1.0, xd)
    val = np.where(capped, _TANH_CEIL, t) / safe
    val = np.where(xd == 0.0, 1.0, val)

    def pullback(g):
        small = np.abs(xd) < 1e-3
        xs = np.where(small, 1.0, safe)
        d = ((1.0 - t * t) * xd - t) / (xs * xs)
        d = np.where(small, -2.0 * xd / 3.0 + (8.0 / 15.0) * xd**3, d)
        d = np.where(capped, -_TANH_CEIL / (safe * safe), d)
        return (g * d,)

    return _make(val, (x,), pullback)


def complex_abs(re, im) -> Tensor:
    """Magnitude of a complex value carried as paired real tensors."""
    re, im = _as_tensor(re), _as_tensor(im)
    if re.shape != im.shape:
        raise DomainError(f"complex_abs: shapes differ {re.shape} vs {im.shape}")
    r = np.hypot(re.data, im.data)
    safe = np.where(r == 0.0, 1.0, r)
    red, imd = re.data, im.data

    def pullback(g):
        return g * red / safe, g * imd / safe

    return _make(r, (re, im), pullback)


# -- reductions and shape ops ----------------------------------------------


def tsum(x, axis=None) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape

    def pullback(g):
        if axis is None:
            return (np.full(shape, float(g.reshape(()))),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(np.sum(x.data, axis=axis), (x,), pullback)


def tmean(x, axis=None) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape
    count = x.size if axis is None else shape[axis]

    def pullback(g):
        if axis is None:
            return (np.full(shape, float(g.reshape(())) / count),)
        return (np.broadcast_to(np.expand_dims(g / count, axis), shape).copy(),)

    return _make(np.mean(x.data, axis=axis), (x,), pullback)


def elementwise_max(a, b) -> Tensor:
    """Elementwise maximum; on ties the gradient goes to the first operand."""
    a, b = _as_tensor(a), _as_tensor(b)
    _elementwise_shapes(a, b, "elementwise_max")
    take_a = a.data >= b.data

    def pullback(g):
        ga = _reduce_to(g * take_a, a.shape)
        gb = _reduce_to(g * ~take_a, b.shape)
        return ga, gb

    return _make(np.maximum(a.data, b.data), (a, b), pullback)


def reduce_max_over_frames(x, axis: int = 2) -> Tensor:
    """Maximum along one axis; gradient flows to the first argmax."""
    x = _as_tensor(x)
    xd = x.data
    idx = np.expand_dims(np.argmax(xd, axis=axis), axis)

    def pullback(g):
        out = np.zeros_like(xd)
        np.put_along_axis(out, idx, np.expand_dims(g, axis), axis=axis)
        return (out,)

    return _make(np.take_along_axis(xd, idx, axis=axis).squeeze(axis), (x,), pullback)


def reshape(x, *shape) -> Tensor:
    x = _as_tensor(x)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = x.shape

    def pullback(g):
        return (g.reshape(old),)

    return _make(x.data.reshape(shape), (x,), pullback)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise DomainError("concat of an empty sequence")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def pullback(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), pullback)


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of one axis (the graph's slicing primitive)."""
    x = _as_tensor(x)
    if start < 0 or start + length > x.shape[axis]:
        raise DomainError(
            f"narrow: [{start}, {start + length}) out of range for axis {axis} of {x.shape}"
        )
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    shape = x.shape

    def pullback(g):
        out = np.zeros(shape)
        out[sl] = g
        return (out,)

    return _make(x.data[sl].copy(), (x,), pullback)


# -- convolution -----------------------------------------------------------


def _same_pad(in_size: int, out_size: int, k: int, s: int) -> tuple[int, int]:
    total = max((out_size - 1) * s + k - in_size, 0)
    return total // 2, total - total // 2


def _im2col(xp: np.ndarray, kh, kw, sh, sw, oh, ow) -> np.ndarray:
    n, c = xp.shape[:2]
    s0, s1, s2, s3 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, oh, ow, kh, kw),
        strides=(s0, s1, s2 * sh, s3 * sw, s2, s3),
        writeable=False,
    )
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, c * kh * kw)


def _col2im(cols, n, c, hp, wp, kh, kw, sh, sw, oh, ow) -> np.ndarray:
    out = np.zeros((n, c, hp, wp))
    win = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + (oh - 1) * sh + 1 : sh, j : j + (ow - 1) * sw + 1 : sw] += win[
                :, :, :, :, i, j
            ]
    return out


def conv2d(x, w, b=None, stride: tuple[int, int] = (1, 1)) -> Tensor:
    """2-d convolution, NCHW layout, 'same' padding: out = ceil(in / stride).

    x: (N, C, H, W); w: (O, C, kh, kw); optional bias b: (O,) folded into
    the op so no tensor broadcasting is needed.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    b = _as_tensor(b) if b is not None else None
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DomainError(f"conv2d: incompatible shapes x={x.shape} w={w.shape}")
    n, c, h, wid = x.shape
    o, _, kh, kw = w.shape
    sh, sw = stride
    oh, ow = ceil(h / sh), ceil(wid / sw)
    pt, pbm = _same_pad(h, oh, kh, sh)
    pl, pr = _same_pad(wid, ow, kw, sw)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pbm), (pl, pr)))
    cols = _im2col(xp, kh, kw, sh, sw, oh, ow)
    wmat = w.data.reshape(o, -1).T
    y = (cols @ wmat).transpose(0, 2, 1).reshape(n, o, oh, ow)
    if b is not None:
        if b.shape != (o,):
            raise DomainError(f"conv2d: bias shape {b.shape} != ({o},)")
        y = y + b.data[None, :, None, None]
    hp, wp = xp.shape[2], xp.shape[3]

    def pullback(g):
        g2 = g.reshape(n, o, oh * ow).transpose(0, 2, 1)
        gw = (cols.reshape(-1, c * kh * kw).T @ g2.reshape(-1, o)).T.reshape(o, c, kh, kw)
        gcols = g2 @ wmat.T
        gxp = _col2im(gcols, n, c, hp, wp, kh, kw, sh, sw, oh, ow)
        gx = gxp[:, :, pt : pt + h, pl : pl + wid]
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, pullback)


def transposed_conv2d(
    x, w, b=None, stride: tuple[int, int] = (1, 1), out_hw: tuple[int, int] | None = None
) -> Tensor:
    """Transposed 2-d convolution: the adjoint of conv2d's 'same' geometry.

    x: (N, Ci, h, w); w: (Ci, Co, kh, kw); output (N, Co, H, W) where
    (H, W) defaults to (h*sh, w*sw) and must satisfy ceil(H/sh) == h.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    b = _as_tensor(b) if b is not None else None
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[0]:
        raise DomainError(f"transposed_conv2d: incompatible shapes x={x.shape} w={w.shape}")
    n, ci, h, wid = x.shape
    _, co, kh, kw = w.shape
    sh, sw = stride
    big_h, big_w = out_hw if out_hw is not None else (h * sh, wid * sw)
    if ceil(big_h / sh) != h or ceil(big_w / sw) != wid:
        raise DomainError(
            f"transposed_conv2d: output {(big_h, big_w)} does not down-sample "
            f"to input {(h, wid)} at stride {stride}"
        )
    pt, pbm = _same_pad(big_h, h, kh, sh)
    pl, pr = _same_pad(big_w, wid, kw, sw)
    hp, wp = big_h + pt + pbm, big_w + pl + pr
    x2 = x.data.reshape(n, ci, h * wid).transpose(0, 2, 1)
    wmat = w.data.reshape(ci, co * kh * kw)
    cols = x2 @ wmat
    yp = _col2im(cols, n, co, hp, wp, kh, kw, sh, sw, h, wid)
    y = yp[:, :, pt : pt + big_h, pl : pl + big_w]
    if b is not None:
        if b.shape != (co,):
            raise DomainError(f"transposed_conv2d: bias shape {b.shape} != ({co},)")
        y = y + b.data[None, :, None, None]

    def pullback(g):
        gp = np.pad(g, ((0, 0), (0, 0), (pt, pbm), (pl, pr)))
        gcols = _im2col(gp, kh, kw, sh, sw, h, wid)
        gx = (gcols @ wmat.T).transpose(0, 2, 1).reshape(n, ci, h, wid)
        gw = (x2.reshape(-1, ci).T @ gcols.reshape(-1, co * kh * kw)).reshape(ci, co, kh, kw)
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, pullback)


# -- optimizer ---------------------------------------------------------------


class Adam:
    """Adam with bias correction over a named parameter dict.

    After each step, parameters and moments are snapped to the float32
    grid (see module docstring) so checkpointed state resumes bit-exactly.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        for name, p in self.params.items():
            g = p.grad
            if g is not None and not np.all(np.isfinite(g)):
                raise DomainError(f"non-finite gradient for parameter '{name}'; step aborted")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            v = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = f32_grid(p.data - update)
            self.m[name] = f32_grid(m)
            self.v[name] = f32_grid(v)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name in self.params:
            out[f"{prefix}.m.{name}"] = self.m[name]
            out[f"{prefix}.v.{name}"] = self.v[name]
        return out

    def load_state(self, prefix: str, arrays: dict[str, np.ndarray], t: int) -> None:
        for name in self.params:
            self.m[name] = np.array(arrays[f"{prefix}.m.{name}"], dtype=np.float64)
            self.v[name] = np.array(arrays[f"{prefix}.v.{name}"], dtype=np.float64)
        self.t = int(t)
