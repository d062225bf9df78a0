"""Small reverse-mode autodiff over float64 numpy arrays.

Tensors are NCHW for the image ops. Each op records its parents and a closure
that pushes the output gradient back to them; ``Tensor.backward`` walks the
graph in reverse topological order once.
"""

import hashlib
import json
import math
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import DataError, ShapeError, UsageError

BCE_EPS = 1e-7


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accum(g)
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op):
    out = Tensor(data)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_check(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None), "mul")


def relu(x):
    mask = x.data > 0
    return _make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x, slope=0.2):
    mask = x.data > 0
    scale = np.where(mask, 1.0, slope)
    return _make(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def sigmoid(x):
    y = expit(x.data)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(x):
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def log(x):
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def clamp(x, lo, hi):
    inside = (x.data >= lo) & (x.data <= hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clamp")


# ---------------------------------------------------------------- reductions

def sum_all(x):
    return _make(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape),), "sum")


def mean(x):
    n = x.data.size
    return _make(np.array(x.data.mean()), (x,), lambda g: (np.broadcast_to(g / n, x.shape),), "mean")


def mse_loss(pred, target):
    """Mean over all elements of (pred - target)²."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes {pred.shape} and {target.shape} differ")
    diff = pred.data - target.data
    n = diff.size
    return _make(np.array(np.mean(diff * diff)), (pred, target),
                 lambda g: (2.0 * g * diff / n, -2.0 * g * diff / n), "mse_loss")


def bce_loss(pred, target):
    """Binary cross entropy -mean[t·log p + (1-t)·log(1-p)], p clamped to [1e-7, 1-1e-7]."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        target = Tensor(np.broadcast_to(target.data, pred.shape)) if target.data.size == 1 else target
    if pred.shape != target.shape:
        raise ShapeError(f"bce_loss: shapes {pred.shape} and {target.shape} differ")
    p = np.clip(pred.data, BCE_EPS, 1.0 - BCE_EPS)
    t = target.data
    n = p.size
    val = -np.mean(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
    inside = (pred.data >= BCE_EPS) & (pred.data <= 1.0 - BCE_EPS)

    def back(g):
        gp = g * (-(t / p) + (1.0 - t) / (1.0 - p)) / n * inside
        gt = g * -(np.log(p) - np.log(1.0 - p)) / n
        return gp, gt

    return _make(np.array(val), (pred, target), back, "bce_loss")


# ---------------------------------------------------------------- structure

def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(ref, t.shape)) if i != axis):
            raise ShapeError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        out = []
        for k in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[k], bounds[k + 1])
            out.append(g[tuple(sl)])
        return out

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back, "concat")


def _check_image(x, op):
    if x.data.ndim != 4:
        raise ShapeError(f"{op}: expected NCHW input, got shape {x.shape}")


def conv_out_size(n, k, stride, padding):
    return (n + 2 * padding - k) // stride + 1


def conv2d(x, w, b=None, stride=1, padding=0):
    """Cross-correlation with zero padding. x: (N,C,H,W), w: (O,C,k,k), b: (O,)."""
    x, w = as_tensor(x), as_tensor(w)
    _check_image(x, "conv2d")
    if w.data.ndim != 4 or w.shape[1] != x.shape[1] or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv2d: input shape {x.shape} incompatible with kernel shape {w.shape}")
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    s, p = stride, padding
    oh, ow = conv_out_size(h, k, s, p), conv_out_size(wd, k, s, p)
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d: input shape {x.shape} too small for kernel shape {w.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :oh, :ow]
    out = np.tensordot(cols, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (o,):
            raise ShapeError(f"conv2d: bias shape {b.shape} does not match kernel shape {w.shape}")
        out = out + b.data[None, :, None, None]
        parents.append(b)
    out = np.ascontiguousarray(out)

    def back(g):
        gx = gw = gb = None
        if x.requires_grad:
            # channel-major scratch keeps every slice add contiguous on the source side
            gcols = np.tensordot(w.data, g, axes=([0], [1]))  # (C,k,k,N,OH,OW)
            gxp = np.zeros((c, n) + xp.shape[2:])
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s] += gcols[:, i, j]
            gx = gxp.transpose(1, 0, 2, 3)
            gx = gx[:, :, p:p + h, p:p + wd] if p else gx
        if w.requires_grad:
            gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb)[:len(parents)]

    return _make(out, parents, back, "conv2d")


def conv_transpose2d(x, w, b=None, stride=1, padding=0):
    """Transposed convolution. x: (N,Cin,H,W), w: (Cin,Cout,k,k); output side (H-1)·s - 2p + k."""
    x, w = as_tensor(x), as_tensor(w)
    _check_image(x, "conv_transpose2d")
    if w.data.ndim != 4 or w.shape[0] != x.shape[1] or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv_transpose2d: input shape {x.shape} incompatible with kernel shape {w.shape}")
    n, cin, h, wd = x.shape
    _, cout, k, _ = w.shape
    s, p = stride, padding
    fh, fw = (h - 1) * s + k, (wd - 1) * s + k
    oh, ow = fh - 2 * p, fw - 2 * p
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv_transpose2d: padding {p} too large for input shape {x.shape}")
    t = np.tensordot(w.data, x.data, axes=([0], [1]))  # (Cout,k,k,N,H,W)
    full = np.zeros((cout, n, fh, fw))
    for i in range(k):
        for j in range(k):
            full[:, :, i:i + s * (h - 1) + 1:s, j:j + s * (wd - 1) + 1:s] += t[:, i, j]
    out = full.transpose(1, 0, 2, 3)[:, :, p:p + oh, p:p + ow]
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (cout,):
            raise ShapeError(f"conv_transpose2d: bias shape {b.shape} does not match kernel shape {w.shape}")
        out = out + b.data[None, :, None, None]
        parents.append(b)
    out = np.ascontiguousarray(out)

    def back(g):
        gf = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p))) if p else g
        gcols = sliding_window_view(gf, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :h, :wd]
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.tensordot(gcols, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        if w.requires_grad:
            gw = np.tensordot(x.data, gcols, axes=([0, 2, 3], [0, 2, 3]))
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb)[:len(parents)]

    return _make(out, parents, back, "conv_transpose2d")


def max_pool2d(x):
    """2×2 max pooling with stride 2; ties route the gradient to the first maximum."""
    _check_image(x, "max_pool2d")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool2d: spatial size of {x.shape} must be even")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def back(g):
        gw = np.zeros(win.shape)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        return (gw.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return _make(out, (x,), back, "max_pool2d")


# ---------------------------------------------------------------- optimizer

class Adam:
    """Bias-corrected Adam over a list of parameter tensors."""

    def __init__(self, params, lr=2e-4, betas=(0.5, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self, self.lr, self.b1, self.b2, self.eps)


def adam_step(params, grads, state, lr, b1, b2, eps):
    """In-place Adam update of numpy arrays; ``state`` carries m, v and the step count t."""
    t = state.t
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"adam: parameter shape {p.shape} and gradient shape {g.shape} differ")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path, tensors):
    """Write named tensors: one-line JSON header, newline, little-endian f64 payloads in header order."""
    items = list(tensors.items())
    header = {"tensors": [{"name": k, "shape": list(np.shape(v.data if isinstance(v, Tensor) else v)),
                           "dtype": "f64"} for k, v in items]}
    with open(path, "wb") as f:
        f.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        f.write(b"\n")
        for _, v in items:
            a = v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise DataError(f"{path}: checkpoint header not terminated")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
        specs = header["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: bad checkpoint header: {exc}") from exc
    out = OrderedDict()
    off = nl + 1
    for spec in specs:
        if spec.get("dtype") != "f64":
            raise DataError(f"{path}: unsupported dtype {spec.get('dtype')!r}")
        shape = tuple(int(s) for s in spec["shape"])
        count = math.prod(shape)
        end = off + 8 * count
        if end > len(data):
            raise DataError(f"{path}: payload truncated at tensor {spec['name']!r} (byte offset {off})")
        out[spec["name"]] = np.frombuffer(data[off:end], dtype="<f8").reshape(shape).astype(np.float64)
        off = end
    if off != len(data):
        raise DataError(f"{path}: {len(data) - off} trailing bytes after payload")
    return out


def checksum(tensors):
    h = hashlib.sha256()
    for k, v in tensors.items():
        a = v.data if isinstance(v, Tensor) else np.asarray(v)
        h.update(k.encode())
        h.update(struct.pack("<I", a.ndim))
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()
