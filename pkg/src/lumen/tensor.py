"""Dense float64 tensors with a reverse-mode gradient tape.

The tape is define-by-run: every differentiable operation appends a record
while a Tape is active, and ``backward`` replays the records in reverse
creation order (which is a topological order by construction). Gradients
accumulate additively into ``Tensor.grad`` buffers, so a tensor used in
several places receives the sum of its contributions.

All data lives in C-contiguous float64 numpy arrays. Convolutions are
evaluated as sums of shifted matrix products so the heavy lifting stays in
BLAS; nothing here loops over individual elements in Python.
"""

from __future__ import annotations

import numpy as np


class TensorError(ValueError):
    """Shape mismatch, unknown op kind, or otherwise malformed op call."""


class NumericalError(ArithmeticError):
    """A forward or backward pass produced NaN or Inf."""


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

_ACTIVE_TAPE = None


class Tape:
    """Ordered record of operations for one forward pass.

    Use as a context manager around the forward computation; the tape is
    single-owner and is consumed by a single ``backward`` call.
    """

    def __init__(self):
        self.records = []
        self.consumed = False

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise TensorError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False


class _Record:
    __slots__ = ("kind", "inputs", "out", "saved", "attrs")

    def __init__(self, kind, inputs, out, saved, attrs):
        self.kind = kind
        self.inputs = inputs
        self.out = out
        self.saved = saved
        self.attrs = attrs


# ---------------------------------------------------------------------------
# Tensor
# ---------------------------------------------------------------------------


class Tensor:
    """N-dimensional float64 array that can participate in backprop."""

    __slots__ = ("data", "grad", "requires_grad", "tape")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar -------------------------------------------------------

    def __add__(self, other):
        return forward_op("add", [self, _coerce(other)])

    __radd__ = __add__

    def __sub__(self, other):
        return forward_op("sub", [self, _coerce(other)])

    def __rsub__(self, other):
        return forward_op("sub", [_coerce(other), self])

    def __mul__(self, other):
        return forward_op("mul", [self, _coerce(other)])

    __rmul__ = __mul__

    def __neg__(self):
        return forward_op("neg", [self])

    def __matmul__(self, other):
        return forward_op("matmul", [self, _coerce(other)])

    def sum(self, axis=None, keepdims=False):
        return forward_op("sum", [self], {"axis": axis, "keepdims": keepdims})

    def mean(self, axis=None, keepdims=False):
        return forward_op("mean", [self], {"axis": axis, "keepdims": keepdims})

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return forward_op("reshape", [self], {"shape": shape})


def _coerce(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# Op registry
# ---------------------------------------------------------------------------

OPS = {}


def _register(kind, forward, backward):
    OPS[kind] = (forward, backward)


def op_kinds():
    """All registered differentiable op kinds."""
    return sorted(OPS)


def forward_op(kind, inputs, attrs=None):
    """Evaluate one op and append a tape record if gradients are needed."""
    if kind not in OPS:
        raise TensorError(f"unknown op kind: {kind!r}")
    fwd, _ = OPS[kind]
    inputs = [_coerce(x) for x in inputs]
    attrs = attrs or {}
    out_data, saved = fwd([t.data for t in inputs], attrs)
    out = Tensor(out_data)
    out.requires_grad = any(t.requires_grad for t in inputs)
    if out.requires_grad and _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE.records.append(_Record(kind, inputs, out, saved, attrs))
        out.tape = _ACTIVE_TAPE
    return out


def backward(root):
    """Populate ``grad`` on every requires_grad tensor reachable from root.

    ``root`` must be a scalar produced under an active-or-finished Tape.
    The tape is consumed; build a fresh one for the next iteration.
    """
    if root.size != 1:
        raise TensorError(f"backward root must be scalar, got shape {root.shape}")
    tape = root.tape
    if tape is None or not tape.records:
        raise TensorError("root has no tape (no recorded operations)")
    if tape.consumed:
        raise TensorError("tape already consumed by a previous backward call")
    tape.consumed = True
    root.grad = np.ones_like(root.data)
    for rec in reversed(tape.records):
        g = rec.out.grad
        if g is None:
            continue
        _, bwd = OPS[rec.kind]
        grads = bwd(g, rec.saved, rec.attrs)
        for t, gi in zip(rec.inputs, grads):
            if gi is None or not t.requires_grad:
                continue
            if t.grad is None:
                t.grad = np.array(gi)  # owned copy; gi may alias saved buffers
            else:
                t.grad += gi


def check_finite(x, context=""):
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values encountered {context}".strip())
    return x


# ---------------------------------------------------------------------------
# Broadcasting helper
# ---------------------------------------------------------------------------



def _contig(a):
    """C-contiguous copy when needed; preserves 0-d arrays (unlike ascontiguousarray)."""
    a = np.asarray(a)
    if a.ndim == 0:
        return a.copy() if not a.flags.writeable else a
    return a if a.flags["C_CONTIGUOUS"] and a.flags.writeable else np.ascontiguousarray(a)

def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise and reduction ops
# ---------------------------------------------------------------------------


def _add_fwd(xs, attrs):
    return xs[0] + xs[1], None


def _add_bwd(g, saved, attrs, shapes=None):
    return g, g


def _make_binary(kind, fwd_fn, bwd_fn):
    def fwd(xs, attrs):
        a, b = xs
        return fwd_fn(a, b), (a.shape, b.shape) + ((a, b) if kind == "mul" else ())

    def bwd(g, saved, attrs):
        sa, sb = saved[0], saved[1]
        ga, gb = bwd_fn(g, saved)
        return _unbroadcast(ga, sa), _unbroadcast(gb, sb)

    _register(kind, fwd, bwd)


_make_binary("add", lambda a, b: a + b, lambda g, s: (g, g))
_make_binary("sub", lambda a, b: a - b, lambda g, s: (g, -g))
_make_binary("mul", lambda a, b: a * b, lambda g, s: (g * s[3], g * s[2]))


def _neg_fwd(xs, attrs):
    return -xs[0], None


def _neg_bwd(g, saved, attrs):
    return (-g,)


_register("neg", _neg_fwd, _neg_bwd)


def _matmul_fwd(xs, attrs):
    a, b = xs
    if a.ndim != 2 or b.ndim != 2:
        raise TensorError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise TensorError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    return a @ b, (a, b)


def _matmul_bwd(g, saved, attrs):
    a, b = saved
    return g @ b.T, a.T @ g


_register("matmul", _matmul_fwd, _matmul_bwd)


def _tanh_fwd(xs, attrs):
    y = np.tanh(xs[0])
    return y, y


def _tanh_bwd(g, y, attrs):
    return (g * (1.0 - y * y),)


_register("tanh", _tanh_fwd, _tanh_bwd)


def _exp_fwd(xs, attrs):
    y = np.exp(xs[0])
    return y, y


def _exp_bwd(g, y, attrs):
    return (g * y,)


_register("exp", _exp_fwd, _exp_bwd)


def _softplus_fwd(xs, attrs):
    x = xs[0]
    y = np.logaddexp(0.0, x)
    return y, x


def _softplus_bwd(g, x, attrs):
    sig = 1.0 / (1.0 + np.exp(-x))
    return (g * sig,)


_register("softplus", _softplus_fwd, _softplus_bwd)


def _leaky_relu_fwd(xs, attrs):
    x = xs[0]
    slope = attrs.get("slope", 0.1)
    pos = x >= 0
    return np.where(pos, x, slope * x), pos


def _leaky_relu_bwd(g, pos, attrs):
    slope = attrs.get("slope", 0.1)
    return (np.where(pos, g, slope * g),)


_register("leaky_relu", _leaky_relu_fwd, _leaky_relu_bwd)


def _abs_fwd(xs, attrs):
    x = xs[0]
    return np.abs(x), np.sign(x)


def _abs_bwd(g, sign, attrs):
    return (g * sign,)


_register("abs", _abs_fwd, _abs_bwd)


def _sqrt_fwd(xs, attrs):
    x = xs[0]
    if np.any(x < 0):
        raise TensorError("sqrt of negative values")
    y = np.sqrt(x)
    return y, y


def _sqrt_bwd(g, y, attrs):
    return (g * 0.5 / np.maximum(y, 1e-300),)


_register("sqrt", _sqrt_fwd, _sqrt_bwd)


def _minimum_fwd(xs, attrs):
    x = xs[0]
    c = attrs["value"]
    below = x < c
    return np.where(below, x, c), below


def _minimum_bwd(g, below, attrs):
    return (np.where(below, g, 0.0),)


_register("minimum", _minimum_fwd, _minimum_bwd)


def _maximum_fwd(xs, attrs):
    x = xs[0]
    c = attrs["value"]
    above = x > c
    return np.where(above, x, c), above


def _maximum_bwd(g, above, attrs):
    return (np.where(above, g, 0.0),)


_register("maximum", _maximum_fwd, _maximum_bwd)


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _sum_fwd(xs, attrs):
    x = xs[0]
    axis = _norm_axis(attrs.get("axis"), x.ndim)
    return x.sum(axis=axis, keepdims=attrs.get("keepdims", False)), x.shape


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g.reshape(()), shape) if not keepdims else np.broadcast_to(g, shape)
    if not keepdims:
        for a in sorted(axis):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


def _sum_bwd(g, shape, attrs):
    axis = _norm_axis(attrs.get("axis"), len(shape))
    return (_contig(_expand_reduced(g, shape, axis, attrs.get("keepdims", False))),)


_register("sum", _sum_fwd, _sum_bwd)


def _mean_fwd(xs, attrs):
    x = xs[0]
    axis = _norm_axis(attrs.get("axis"), x.ndim)
    return x.mean(axis=axis, keepdims=attrs.get("keepdims", False)), x.shape


def _mean_bwd(g, shape, attrs):
    axis = _norm_axis(attrs.get("axis"), len(shape))
    if axis is None:
        n = int(np.prod(shape))
    else:
        n = int(np.prod([shape[a] for a in axis]))
    gg = _expand_reduced(g, shape, axis, attrs.get("keepdims", False))
    return (_contig(gg) / n,)


_register("mean", _mean_fwd, _mean_bwd)


def _reshape_fwd(xs, attrs):
    x = xs[0]
    return x.reshape(attrs["shape"]), x.shape


def _reshape_bwd(g, shape, attrs):
    return (g.reshape(shape),)


_register("reshape", _reshape_fwd, _reshape_bwd)


def _transpose_fwd(xs, attrs):
    x = xs[0]
    if x.ndim != 2:
        raise TensorError(f"transpose expects a matrix, got {x.shape}")
    return np.ascontiguousarray(x.T), None


def _transpose_bwd(g, saved, attrs):
    return (np.ascontiguousarray(g.T),)


_register("transpose", _transpose_fwd, _transpose_bwd)


def _slice_fwd(xs, attrs):
    x = xs[0]
    axis, start, length = attrs["axis"], attrs["start"], attrs["length"]
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    return np.ascontiguousarray(x[tuple(idx)]), x.shape


def _slice_bwd(g, shape, attrs):
    axis, start, length = attrs["axis"], attrs["start"], attrs["length"]
    out = np.zeros(shape)
    idx = [slice(None)] * len(shape)
    idx[axis] = slice(start, start + length)
    out[tuple(idx)] = g
    return (out,)


_register("slice", _slice_fwd, _slice_bwd)


def _concat_fwd(xs, attrs):
    axis = attrs.get("axis", -1)
    return np.concatenate(xs, axis=axis), [x.shape[axis] for x in xs]


def _concat_bwd(g, sizes, attrs):
    axis = attrs.get("axis", -1)
    splits = np.cumsum(sizes)[:-1]
    return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))


_register("concat", _concat_fwd, _concat_bwd)


# ---------------------------------------------------------------------------
# Convolutions (stride 1, zero-padded "same" output, channels-last)
# ---------------------------------------------------------------------------


def _pad_map(x, ksizes, left_pads):
    """Zero-pad the spatial axes of a channels-last map for a 'same' convolution."""
    spatial = x.shape[:-1]
    padded_shape = tuple(s + k - 1 for s, k in zip(spatial, ksizes)) + (x.shape[-1],)
    xp = np.zeros(padded_shape)
    xp[tuple(slice(p, p + s) for p, s in zip(left_pads, spatial)) + (slice(None),)] = x
    return xp


def _offsets(ksizes):
    if len(ksizes) == 2:
        return [(u, v) for u in range(ksizes[0]) for v in range(ksizes[1])]
    return [(u, v, r) for u in range(ksizes[0]) for v in range(ksizes[1]) for r in range(ksizes[2])]


def _patch(xp, off, spatial, c):
    sl = tuple(slice(o, o + s) for o, s in zip(off, spatial))
    return xp[sl].reshape(int(np.prod(spatial)), c)


def _conv_forward(x, w, ndim):
    ksizes = w.shape[:ndim]
    cin, cout = w.shape[ndim], w.shape[ndim + 1]
    if x.shape[-1] != cin:
        raise TensorError(f"conv channel mismatch: input {x.shape[-1]}, kernel {cin}")
    spatial = x.shape[:-1]
    left = [(k - 1) // 2 for k in ksizes]
    xp = _pad_map(x, ksizes, left)
    npos = int(np.prod(spatial))
    out = np.zeros((npos, cout))
    for off in _offsets(ksizes):
        out += _patch(xp, off, spatial, cin) @ w[off]
    return out.reshape(*spatial, cout), (xp, w, spatial)


def _conv_backward(g, saved, ndim):
    xp, w, spatial = saved
    ksizes = w.shape[:ndim]
    cin, cout = w.shape[ndim], w.shape[ndim + 1]
    npos = int(np.prod(spatial))
    g2 = g.reshape(npos, cout)
    dw = np.empty_like(w)
    for off in _offsets(ksizes):
        dw[off] = _patch(xp, off, spatial, cin).T @ g2
    # dx as a correlation of g with the spatially flipped, channel-swapped kernel;
    # accumulating over flat positions avoids scatter-adds into the padded buffer
    right_as_left = [k - 1 - (k - 1) // 2 for k in ksizes]
    gp = _pad_map(g, ksizes, right_as_left)
    dx = np.zeros((npos, cin))
    last = tuple(k - 1 for k in ksizes)
    for off in _offsets(ksizes):
        src = tuple(l - o for l, o in zip(last, off))
        dx += _patch(gp, off, spatial, cout) @ w[src].T
    return dx.reshape(*spatial, cin), dw


def _conv2d_fwd(xs, attrs):
    x, w = xs
    if x.ndim != 3 or w.ndim != 4:
        raise TensorError(f"conv2d expects x (H,W,Cin) and w (kh,kw,Cin,Cout), got {x.shape}, {w.shape}")
    return _conv_forward(x, w, 2)


def _conv2d_bwd(g, saved, attrs):
    return _conv_backward(g, saved, 2)


_register("conv2d", _conv2d_fwd, _conv2d_bwd)


def _conv3d_fwd(xs, attrs):
    x, w = xs
    if x.ndim != 4 or w.ndim != 5:
        raise TensorError(f"conv3d expects x (D,H,W,Cin) and w (kd,kh,kw,Cin,Cout), got {x.shape}, {w.shape}")
    return _conv_forward(x, w, 3)


def _conv3d_bwd(g, saved, attrs):
    return _conv_backward(g, saved, 3)


_register("conv3d", _conv3d_fwd, _conv3d_bwd)


# ---------------------------------------------------------------------------
# Upsampling (factor 2 along the given axes, channels-last)
# ---------------------------------------------------------------------------


def _upsample_nearest_fwd(xs, attrs):
    x = xs[0]
    for a in attrs["axes"]:
        x = np.repeat(x, 2, axis=a)
    return x, None


def _upsample_nearest_bwd(g, saved, attrs):
    for a in sorted(attrs["axes"], reverse=True):
        shape = list(g.shape)
        shape[a] //= 2
        shape.insert(a + 1, 2)
        g = g.reshape(shape).sum(axis=a + 1)
    return (np.ascontiguousarray(g),)


_register("upsample_nearest", _upsample_nearest_fwd, _upsample_nearest_bwd)


_BILINEAR_CACHE = {}


def _bilinear_matrix(n):
    """(2n x n) linear interpolation matrix, half-pixel-center convention."""
    if n in _BILINEAR_CACHE:
        return _BILINEAR_CACHE[n]
    M = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = (o + 0.5) / 2.0 - 0.5
        lo = int(np.floor(src))
        frac = src - lo
        lo_c = min(max(lo, 0), n - 1)
        hi_c = min(max(lo + 1, 0), n - 1)
        M[o, lo_c] += 1.0 - frac
        M[o, hi_c] += frac
    _BILINEAR_CACHE[n] = M
    return M


def _apply_axis_matrix(x, M, axis):
    x = np.moveaxis(x, axis, 0)
    lead = x.shape[0]
    rest = x.shape[1:]
    y = M @ x.reshape(lead, -1)
    y = y.reshape((M.shape[0],) + rest)
    return np.ascontiguousarray(np.moveaxis(y, 0, axis))


def _upsample_bilinear_fwd(xs, attrs):
    x = xs[0]
    for a in attrs["axes"]:
        x = _apply_axis_matrix(x, _bilinear_matrix(x.shape[a]), a)
    return x, None


def _upsample_bilinear_bwd(g, saved, attrs):
    for a in reversed(attrs["axes"]):
        g = _apply_axis_matrix(g, _bilinear_matrix(g.shape[a] // 2).T, a)
    return (g,)


_register("upsample_bilinear", _upsample_bilinear_fwd, _upsample_bilinear_bwd)


# ---------------------------------------------------------------------------
# Functional sugar
# ---------------------------------------------------------------------------


def exp(x):
    return forward_op("exp", [x])


def tanh(x):
    return forward_op("tanh", [x])


def softplus(x):
    return forward_op("softplus", [x])


def leaky_relu(x, slope=0.1):
    return forward_op("leaky_relu", [x], {"slope": slope})


def absval(x):
    return forward_op("abs", [x])


def sqrt(x):
    return forward_op("sqrt", [x])


def minimum(x, value):
    return forward_op("minimum", [x], {"value": float(value)})


def maximum(x, value):
    return forward_op("maximum", [x], {"value": float(value)})


def concat(tensors, axis=-1):
    return forward_op("concat", list(tensors), {"axis": axis})


def transpose(x):
    return forward_op("transpose", [x])


def narrow(x, axis, start, length):
    return forward_op("slice", [x], {"axis": axis, "start": start, "length": length})


def conv2d(x, w, b=None):
    y = forward_op("conv2d", [x, w])
    if b is not None:
        y = y + b
    return y


def conv3d(x, w, b=None):
    y = forward_op("conv3d", [x, w])
    if b is not None:
        y = y + b
    return y


def upsample_nearest(x, axes):
    return forward_op("upsample_nearest", [x], {"axes": tuple(axes)})


def upsample_bilinear(x, axes):
    return forward_op("upsample_bilinear", [x], {"axes": tuple(axes)})


def finite_diff(x, axis, spacing=1):
    """Unnormalized forward difference x[...,k+spacing] - x[...,k] along axis."""
    n = x.shape[axis]
    if spacing < 1 or spacing >= n:
        raise TensorError(f"finite_diff spacing {spacing} invalid for axis length {n}")
    hi = narrow(x, axis, spacing, n - spacing)
    lo = narrow(x, axis, 0, n - spacing)
    return hi - lo


def l1(x):
    """Sum of absolute values."""
    return absval(x).sum()


def l2(x):
    """Euclidean norm; safe-at-zero gradient via a denormal-level floor."""
    return sqrt((x * x).sum() + 1e-300)
