"""Minimal reverse-mode differentiation over numpy arrays.

Only the operations needed by the regularizer networks, the unrolled
conjugate-gradient solver and the training loss are provided.

Complex values are supported with the convention that the gradient stored for
a complex node ``z`` is ``dL/dRe(z) + 1j * dL/dIm(z)`` for a real loss ``L``.
Under this convention a complex-linear map is differentiated by applying its
adjoint, and gradients flowing into real nodes keep only their real part.

Spatial activations are channels-last, ``[N, H, W, C]``; the frame axis of a
2D+t image plays the role of ``N``.
"""

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Evaluate without recording a graph."""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


class Node:
    __array_priority__ = 1000

    def __init__(self, value, parents=(), backward=None, requires_grad=None):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value)
        self.parents = tuple(parents)
        self._backward = backward
        if requires_grad is None:
            requires_grad = _grad_enabled and any(p.requires_grad for p in self.parents)
        self.requires_grad = bool(requires_grad)
        if not self.requires_grad:
            self.parents = ()
            self._backward = None
        self.grad = None

    def __repr__(self):
        return f"Node(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def ndim(self):
        return self.value.ndim

    def numpy(self):
        return self.value

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None, keep_intermediate=False):
        """Accumulate gradients of this node into every ancestor requiring them.

        Intermediate gradients are dropped after use unless
        ``keep_intermediate``; leaf gradients are always kept.
        """
        if grad is None:
            if self.value.size != 1:
                raise ValueError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.value)
        order = _toposort(self)
        self.grad = np.asarray(grad, dtype=self.value.dtype)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            node._backward(node.grad)
            if not keep_intermediate:
                node.grad = None

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __neg__ = lambda self: neg(self)
    __getitem__ = lambda self, index: getitem(self, index)


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_node(x):
    return x if isinstance(x, Node) else Node(x)


def parameter(value):
    return Node(np.array(value), requires_grad=True)


def _val(x):
    if isinstance(x, Node):
        return x.value
    if isinstance(x, (int, float, complex)):
        return x  # python scalars stay weakly typed
    return np.asarray(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _accumulate(node, g):
    if not isinstance(node, Node) or not node.requires_grad:
        return
    g = _unbroadcast(np.asarray(g), node.shape)
    if not np.iscomplexobj(node.value) and np.iscomplexobj(g):
        g = g.real
    g = g.astype(node.value.dtype, copy=False)
    node.grad = g if node.grad is None else node.grad + g


def _conj(v):
    return np.conj(v) if np.iscomplexobj(v) else v


def _make(value, parents, backward):
    parents = [p for p in parents if isinstance(p, Node)]
    return Node(value, parents, backward)


# elementwise arithmetic

def add(a, b):
    out = _val(a) + _val(b)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)
    return _make(out, (a, b), backward)


def sub(a, b):
    out = _val(a) - _val(b)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)
    return _make(out, (a, b), backward)


def neg(a):
    return _make(-_val(a), (a,), lambda g: _accumulate(a, -g))


def mul(a, b):
    va, vb = _val(a), _val(b)

    def backward(g):
        if isinstance(a, Node) and a.requires_grad:
            _accumulate(a, g * _conj(vb))
        if isinstance(b, Node) and b.requires_grad:
            _accumulate(b, g * _conj(va))
    return _make(va * vb, (a, b), backward)


def div(a, b):
    va, vb = _val(a), _val(b)
    out = va / vb

    def backward(g):
        if isinstance(a, Node) and a.requires_grad:
            _accumulate(a, g / _conj(vb))
        if isinstance(b, Node) and b.requires_grad:
            _accumulate(b, -g * _conj(out / vb))
    return _make(out, (a, b), backward)


def square(a):
    va = _val(a)
    if np.iscomplexobj(va):
        raise TypeError("square is defined for real nodes; use cabs for magnitudes")
    return _make(va * va, (a,), lambda g: _accumulate(a, 2 * g * va))


def exp(a):
    out = np.exp(_val(a))
    return _make(out, (a,), lambda g: _accumulate(a, g * _conj(out)))


def log(a):
    va = _val(a)
    return _make(np.log(va), (a,), lambda g: _accumulate(a, g / _conj(va)))


def sqrt(a):
    out = np.sqrt(_val(a))
    return _make(out, (a,), lambda g: _accumulate(a, g * 0.5 / out))


def relu(a):
    va = _val(a)
    keep = va > 0
    return _make(va * keep, (a,), lambda g: _accumulate(a, g * keep))


# reductions and shape plumbing

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    va = _val(a)
    out = np.sum(va, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, va.shape))
    return _make(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    va = _val(a)
    count = va.size if axis is None else int(np.prod([va.shape[i] for i in np.atleast_1d(axis)]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    va = _val(a)
    return _make(va.reshape(shape), (a,), lambda g: _accumulate(a, g.reshape(va.shape)))


def transpose(a, axes):
    inverse = np.argsort(axes)
    return _make(np.transpose(_val(a), axes), (a,), lambda g: _accumulate(a, np.transpose(g, inverse)))


def broadcast_to(a, shape):
    return _make(np.broadcast_to(_val(a), shape), (a,), lambda g: _accumulate(a, g))


def getitem(a, index):
    """Basic (slice / integer) indexing."""
    va = _val(a)

    def backward(g):
        full = np.zeros(va.shape, dtype=np.result_type(va, g))
        full[index] += g
        _accumulate(a, full)
    return _make(va[index], (a,), backward)


def concat(nodes, axis=0):
    values = [_val(n) for n in nodes]
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

    def backward(g):
        for node, piece in zip(nodes, np.split(g, bounds, axis=axis)):
            _accumulate(node, piece)
    return _make(np.concatenate(values, axis=axis), nodes, backward)


def roll(a, shift, axis):
    va = _val(a)
    if isinstance(shift, (tuple, list)):
        back = tuple(-s for s in shift)
    else:
        back = -shift
    return _make(np.roll(va, shift, axis=axis), (a,), lambda g: _accumulate(a, np.roll(g, back, axis=axis)))


def matmul(a, b):
    """Matrix product for 1D/2D operands."""
    va, vb = _val(a), _val(b)
    out = va @ vb

    def backward(g):
        if isinstance(a, Node) and a.requires_grad:
            if vb.ndim == 1:
                ga = np.multiply.outer(g, _conj(vb))
            else:
                ga = g @ _conj(vb).T
            _accumulate(a, ga)
        if isinstance(b, Node) and b.requires_grad:
            if va.ndim == 1:
                gb = np.multiply.outer(_conj(va), g)
            else:
                gb = _conj(va).T @ g
            _accumulate(b, gb)
    return _make(out, (a, b), backward)


def softmax(a):
    """Softmax over a 1D node."""
    va = _val(a)
    e = np.exp(va - va.max())
    s = e / e.sum()

    def backward(g):
        _accumulate(a, s * (g - np.dot(g, s)))
    return _make(s, (a,), backward)


# complex helpers

def to_channels(z, axis=0):
    """Complex -> real with (real, imag) stacked on a new ``axis``."""
    vz = _val(z)

    def backward(g):
        re, im = np.moveaxis(g, axis, 0)
        _accumulate(z, re + 1j * im)
    return _make(np.stack([vz.real, vz.imag], axis=axis), (z,), backward)


def from_channels(x, axis=0):
    """Real with a size-2 ``axis`` -> complex."""
    vx = np.moveaxis(_val(x), axis, 0)
    if vx.shape[0] != 2:
        raise ValueError("channel axis must have extent 2")

    def backward(g):
        _accumulate(x, np.stack([g.real, g.imag], axis=axis))
    return _make(vx[0] + 1j * vx[1], (x,), backward)


def cabs(z):
    """Magnitude; the subgradient at zero is taken as zero."""
    vz = _val(z)
    out = np.abs(vz)

    def backward(g):
        safe = np.where(out > 0, out, 1)
        _accumulate(z, g * np.where(out > 0, vz / safe, 0))
    return _make(out, (z,), backward)


def real(z):
    vz = _val(z)
    return _make(np.real(vz).copy(), (z,), lambda g: _accumulate(z, g))


def vdot(a, b):
    """Sum of conj(a) * b over all elements."""
    va, vb = _val(a), _val(b)
    out = np.vdot(va.ravel(), vb.ravel())

    def backward(g):
        if isinstance(a, Node) and a.requires_grad:
            _accumulate(a, vb * np.conj(g))
        if isinstance(b, Node) and b.requires_grad:
            _accumulate(b, va * g)
    return _make(np.asarray(out), (a, b), backward)


def linop(x, apply, adjoint):
    """Apply a fixed linear operator; the backward pass applies its adjoint."""
    return _make(apply(_val(x)), (x,), lambda g: _accumulate(x, adjoint(g)))


# convolutions and resampling (channels-last)

def _shift_gemm(flat, weights, offsets, length):
    out = None
    tmp = None
    for w, off in zip(weights, offsets):
        src = flat[off:off + length]
        if out is None:
            out = src @ w
            tmp = np.empty_like(out)
        else:
            np.matmul(src, w, out=tmp)
            out += tmp
    return out


def conv2d(x, w, b=None, stride=1, pad=0):
    """2D cross-correlation with zero padding.

    x: [N, H, W, C]; w: [kh, kw, C, O]; b: [O] or None.
    """
    vx, vw = _val(x), _val(w)
    if vx.ndim != 4 or vw.ndim != 4:
        raise ValueError("conv2d expects x [N, H, W, C] and w [kh, kw, C, O]")
    n, h, wd, c = vx.shape
    kh, kw, cw, o = vw.shape
    if cw != c:
        raise ValueError(f"channel mismatch: input has {c}, kernel expects {cw}")
    hp, wp = h + 2 * pad, wd + 2 * pad
    if kh > hp or kw > wp:
        raise ValueError("kernel does not fit the padded input")
    dtype = np.result_type(vx, vw)
    if pad:
        xp = np.zeros((n, hp, wp, c), dtype=dtype)
        xp[:, pad:pad + h, pad:pad + wd] = vx
    else:
        xp = np.ascontiguousarray(vx, dtype=dtype)
    flat = xp.reshape(-1, c)
    offsets = [i * wp + j for i in range(kh) for j in range(kw)]
    length = n * hp * wp - offsets[-1]
    ho1, wo1 = hp - kh + 1, wp - kw + 1
    taps = vw.reshape(kh * kw, c, o).astype(dtype, copy=False)
    full = np.zeros((n * hp * wp, o), dtype=dtype)
    full[:length] = _shift_gemm(flat, taps, offsets, length)
    out = full.reshape(n, hp, wp, o)[:, :ho1:stride, :wo1:stride]
    if b is not None:
        out = out + _val(b)
    out = np.ascontiguousarray(out)

    def backward(g):
        gfull = np.zeros((n, hp, wp, o), dtype=dtype)
        gfull[:, :ho1:stride, :wo1:stride] = g
        gq = gfull.reshape(-1, o)[:length]
        if isinstance(w, Node) and w.requires_grad:
            gw = np.empty_like(taps)
            for k, off in enumerate(offsets):
                gw[k] = flat[off:off + length].T @ gq
            _accumulate(w, gw.reshape(vw.shape))
        if isinstance(x, Node) and x.requires_grad:
            gflat = np.zeros_like(flat)
            for k, off in enumerate(offsets):
                gflat[off:off + length] += gq @ taps[k].T
            _accumulate(x, gflat.reshape(n, hp, wp, c)[:, pad:pad + h, pad:pad + wd])
        if isinstance(b, Node) and b.requires_grad:
            _accumulate(b, g.sum(axis=(0, 1, 2)))
    return _make(out, (x, w, b), backward)


def conv1d_t(x, w, b=None):
    """Cross-correlation along axis 0 with circular padding.

    x: [T, H, W, C]; w: [k, C, O]; out[t] = sum_j x[(t + j - k//2) mod T] @ w[j].
    """
    vx, vw = _val(x), _val(w)
    if vx.ndim != 4 or vw.ndim != 3:
        raise ValueError("conv1d_t expects x [T, H, W, C] and w [k, C, O]")
    t, h, wd, c = vx.shape
    k, cw, o = vw.shape
    if cw != c:
        raise ValueError(f"channel mismatch: input has {c}, kernel expects {cw}")
    if k > 2 * t:
        raise ValueError(f"temporal kernel of length {k} exceeds twice the {t} frames")
    dtype = np.result_type(vx, vw)
    frames = (np.arange(t + k - 1) - k // 2) % t
    xp = np.ascontiguousarray(vx[frames], dtype=dtype)
    flat = xp.reshape(-1, c)
    frame = h * wd
    offsets = [j * frame for j in range(k)]
    length = t * frame
    taps = vw.astype(dtype, copy=False)
    out = _shift_gemm(flat, taps, offsets, length).reshape(t, h, wd, o)
    if b is not None:
        out = out + _val(b)

    def backward(g):
        gq = np.ascontiguousarray(g, dtype=dtype).reshape(-1, o)
        if isinstance(w, Node) and w.requires_grad:
            gw = np.empty_like(taps)
            for j, off in enumerate(offsets):
                gw[j] = flat[off:off + length].T @ gq
            _accumulate(w, gw)
        if isinstance(x, Node) and x.requires_grad:
            gflat = np.zeros_like(flat)
            for j, off in enumerate(offsets):
                gflat[off:off + length] += gq @ taps[j].T
            gxp = gflat.reshape(t + k - 1, h, wd, c)
            gx = np.zeros((t, h, wd, c), dtype=dtype)
            for r, src in enumerate(frames):
                gx[src] += gxp[r]
            _accumulate(x, gx)
        if isinstance(b, Node) and b.requires_grad:
            _accumulate(b, g.sum(axis=(0, 1, 2)))
    return _make(out, (x, w, b), backward)


def downsample2x(x):
    """2x2 average pooling over axes 1 and 2 of [N, H, W, C]."""
    vx = _val(x)
    n, h, w, c = vx.shape
    if h % 2 or w % 2:
        raise ValueError(f"downsample2x needs even extents, got {h}x{w}")
    out = vx.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def backward(g):
        g4 = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25
        _accumulate(x, g4)
    return _make(out, (x,), backward)


def upsample2x(x):
    """Nearest-neighbour 2x upsampling over axes 1 and 2 of [N, H, W, C]."""
    vx = _val(x)
    n, h, w, c = vx.shape
    out = np.repeat(np.repeat(vx, 2, axis=1), 2, axis=2)

    def backward(g):
        _accumulate(x, g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)))
    return _make(out, (x,), backward)


def bilinear_matrix(n_out, n_in, dtype=np.float64):
    """Half-pixel-centre linear interpolation weights, shape [n_out, n_in]."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1:
        m[:, 0] = 1
        return m
    src = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def resize_bilinear(x, out_h, out_w):
    """Resize [h, w, C] to [out_h, out_w, C]."""
    vx = _val(x)
    h, w, _ = vx.shape
    ry = bilinear_matrix(out_h, h, vx.dtype)
    rx = bilinear_matrix(out_w, w, vx.dtype)
    out = np.einsum("ab,bcd,ec->aed", ry, vx, rx, optimize=True)

    def backward(g):
        _accumulate(x, np.einsum("ab,aed,ec->bcd", ry, g, rx, optimize=True))
    return _make(out, (x,), backward)
