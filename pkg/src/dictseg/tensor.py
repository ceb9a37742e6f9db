"""Dense float64 tensors with reverse-mode automatic differentiation.

Only the operations this architecture needs: elementwise arithmetic,
matrix products, softmax rows, 3x3 convolution, bilinear resizing,
reductions, and shape moves. Values are numpy arrays in row-major order;
gradients are accumulated by closures recorded at construction time and
replayed in reverse topological order.

Summation-order contract: `matmul` accumulates over the inner dimension
in index order (t = 0, 1, ..., k-1) whenever k <= EXACT_INNER_LIMIT, which
reproduces the naive three-loop product bit-for-bit. Larger products go
through BLAS, which reassociates the sum for speed; both paths are
deterministic from run to run on one platform.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import DimensionError, NumericalError

EXACT_INNER_LIMIT = 64

_grad_enabled = True

# Opt-in per-operation finiteness assertion. Tests enable it; training
# checks only losses and updates so the hot loop stays cheap.
finite_checks = False


@contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr


class Tensor:
    """A node in the computation graph holding a float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents: tuple = ()
        self._backward = None
        if finite_checks and not np.all(np.isfinite(self.data)):
            raise NumericalError("tensor holds non-finite values")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_scalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar. Scalars are accepted where broadcasting is trivial.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(constant_like(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def matmul(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape if len(shape) != 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def backward(self, grad=None) -> None:
        """Accumulate gradients of this scalar into every reachable node."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(
                    f"backward() needs a scalar output, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        self.grad = _as_array(grad).reshape(self.data.shape)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def free_graph(self) -> None:
        """Drop backward closures reachable from this node (memory release)."""
        for node in _topological_order(self):
            node._parents = ()
            node._backward = None


class Parameter(Tensor):
    """A named trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name
        # Parameters stay trainable even if constructed under no_grad.
        self.requires_grad = True

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def _raise_scalar(t: Tensor):
    raise DimensionError(f"expected a scalar tensor, got shape {t.shape}")


def constant_like(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _topological_order(root: Tensor) -> list:
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


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _accumulate(node: Tensor, grad: np.ndarray) -> None:
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.array(grad, dtype=np.float64, copy=True)
    else:
        node.grad = node.grad + grad


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise arithmetic


def add(a, b) -> Tensor:
    a = constant_like(a)
    b = constant_like(b)
    data = a.data + b.data

    def backward(grad):
        _accumulate(a, _unbroadcast(grad, a.shape))
        _accumulate(b, _unbroadcast(grad, b.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = constant_like(a)
    b = constant_like(b)
    data = a.data - b.data

    def backward(grad):
        _accumulate(a, _unbroadcast(grad, a.shape))
        _accumulate(b, _unbroadcast(-grad, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = constant_like(a)
    b = constant_like(b)
    data = a.data * b.data

    def backward(grad):
        _accumulate(a, _unbroadcast(grad * b.data, a.shape))
        _accumulate(b, _unbroadcast(grad * a.data, b.shape))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a = constant_like(a)
    b = constant_like(b)
    data = a.data / b.data

    def backward(grad):
        _accumulate(a, _unbroadcast(grad / b.data, a.shape))
        _accumulate(b, _unbroadcast(-grad * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(grad):
        _accumulate(a, grad * data)

    return _make(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(grad):
        _accumulate(a, grad / a.data)

    return _make(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(grad):
        _accumulate(a, grad * (1.0 - data * data))

    return _make(data, (a,), backward)


def square(a: Tensor) -> Tensor:
    return mul(a, a)


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(a: Tensor) -> Tensor:
    """Smooth nonlinearity 0.5*x*(1 + tanh(c*(x + 0.044715*x^3))).

    The closed tanh form is fixed so two runs (and two implementations)
    agree exactly; c = sqrt(2/pi).
    """
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def backward(grad):
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        _accumulate(a, grad * local)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------------------
# Reductions


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad):
        g = grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.shape[ax]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def amax(a: Tensor, axis: int) -> Tensor:
    """Maximum along one axis; gradient routes to the first maximal entry."""
    data = a.data.max(axis=axis)
    idx = a.data.argmax(axis=axis)

    def backward(grad):
        g = np.zeros_like(a.data)
        np.put_along_axis(
            g, np.expand_dims(idx, axis), np.expand_dims(grad, axis), axis
        )
        _accumulate(a, g)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------------------
# Shape moves


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    data = a.data.reshape(shape)

    def backward(grad):
        _accumulate(a, grad.reshape(a.shape))

    return _make(data, (a,), backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    data = a.data.transpose(axes)
    if axes is None:
        inverse = None
    else:
        inverse = tuple(np.argsort(axes))

    def backward(grad):
        _accumulate(a, grad.transpose(inverse))

    return _make(data, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [constant_like(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * grad.ndim
            index[axis] = slice(lo, hi)
            _accumulate(t, grad[tuple(index)])

    return _make(data, tuple(tensors), backward)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    data = a.data[index]

    def backward(grad):
        g = np.zeros_like(a.data)
        g[index] = grad
        _accumulate(a, g)

    return _make(data, (a,), backward)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [constant_like(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(grad):
        parts = np.moveaxis(grad, axis, 0)
        for t, g in zip(tensors, parts):
            _accumulate(t, g)

    return _make(data, tuple(tensors), backward)


# ---------------------------------------------------------------------------
# Matrix product


def _matmul_data(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """2-D product; index-order accumulation for small inner dimensions.

    For k <= EXACT_INNER_LIMIT the sum over the inner dimension runs
    t = 0..k-1 with one rounded multiply and one rounded add per term,
    matching the naive three-loop product exactly. BLAS (used above the
    limit) reassociates and fuses, which changes low-order bits.
    """
    k = a.shape[1]
    if k <= EXACT_INNER_LIMIT:
        out = np.zeros((a.shape[0], b.shape[1]))
        for t in range(k):
            out += a[:, t, None] * b[t]
        return out
    return a @ b


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = constant_like(a)
    b = constant_like(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-D operands, got {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner extents differ: {a.shape} vs {b.shape}"
        )
    data = _matmul_data(a.data, b.data)

    def backward(grad):
        _accumulate(a, _matmul_data(grad, b.data.T))
        _accumulate(b, _matmul_data(a.data.T, grad))

    return _make(data, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: y[..., j] = sum_i x[..., i] w[i, j] + b[j]."""
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
    out = matmul(flat, weight)
    if bias is not None:
        out = add(out, bias)
    if x.ndim != 2:
        out = reshape(out, lead + (weight.shape[1],))
    return out


# ---------------------------------------------------------------------------
# Softmax


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor, stabilized by row-max subtraction."""
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows expects a 2-D tensor, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=1, keepdims=True)

    def backward(grad):
        inner = (grad * data).sum(axis=1, keepdims=True)
        _accumulate(x, data * (grad - inner))

    return _make(data, (x,), backward)


def log_softmax_rows(x: Tensor) -> Tensor:
    """Row-wise log softmax of a 2-D tensor (stable)."""
    if x.ndim != 2:
        raise DimensionError(f"log_softmax_rows expects a 2-D tensor, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    data = shifted - lse
    soft = np.exp(data)

    def backward(grad):
        _accumulate(x, grad - soft * grad.sum(axis=1, keepdims=True))

    return _make(data, (x,), backward)


# ---------------------------------------------------------------------------
# Convolution (3x3, zero padding 1, stride 1 or 2)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int) -> Tensor:
    """3x3 convolution over NCHW input with symmetric zero padding of 1.

    Output spatial size is ceil(H/stride) for stride in {1, 2}, so a
    stride-2 convolution halves even extents exactly.
    """
    if x.ndim != 4:
        raise DimensionError(f"conv2d expects NCHW input, got {x.shape}")
    batch, c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = weight.shape
    if (kh, kw) != (3, 3) or c_in_w != c_in:
        raise DimensionError(
            f"conv2d weight {weight.shape} incompatible with input {x.shape}"
        )
    h_out = (h + 2 - 3) // stride + 1
    w_out = (w + 2 - 3) // stride + 1

    padded = np.zeros((batch, c_in, h + 2, w + 2))
    padded[:, :, 1 : h + 1, 1 : w + 1] = x.data
    cols = np.empty((batch, c_in, 3, 3, h_out, w_out))
    for ky in range(3):
        for kx in range(3):
            cols[:, :, ky, kx] = padded[
                :, :, ky : ky + stride * h_out : stride, kx : kx + stride * w_out : stride
            ]
    # rows are pixels (batch-major, then row-major), columns are (c, ky, kx)
    cols2 = cols.transpose(0, 4, 5, 1, 2, 3).reshape(batch * h_out * w_out, c_in * 9)
    w2 = weight.data.reshape(c_out, c_in * 9)
    out2 = _matmul_data(cols2, w2.T) + bias.data
    data = out2.reshape(batch, h_out, w_out, c_out).transpose(0, 3, 1, 2)

    def backward(grad):
        g2 = grad.transpose(0, 2, 3, 1).reshape(batch * h_out * w_out, c_out)
        if weight.requires_grad:
            _accumulate(weight, _matmul_data(g2.T, cols2).reshape(weight.shape))
        if bias.requires_grad:
            _accumulate(bias, g2.sum(axis=0))
        if x.requires_grad:
            d_cols = _matmul_data(g2, w2)
            d_cols = d_cols.reshape(batch, h_out, w_out, c_in, 3, 3).transpose(
                0, 3, 4, 5, 1, 2
            )
            g_pad = np.zeros_like(padded)
            for ky in range(3):
                for kx in range(3):
                    g_pad[
                        :,
                        :,
                        ky : ky + stride * h_out : stride,
                        kx : kx + stride * w_out : stride,
                    ] += d_cols[:, :, ky, kx]
            _accumulate(x, g_pad[:, :, 1 : h + 1, 1 : w + 1])

    return _make(data, (x, weight, bias), backward)


# ---------------------------------------------------------------------------
# Bilinear resize (corner-aligned)

_interp_cache: dict[tuple[int, int], np.ndarray] = {}


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Corner-aligned 1-D interpolation weights as an (n_out, n_in) matrix.

    Output sample j reads source coordinate j*(n_in-1)/(n_out-1); the two
    neighbouring source samples get weights (1-f) and f. Endpoints map to
    endpoints. A single source sample is broadcast.
    """
    key = (n_in, n_out)
    cached = _interp_cache.get(key)
    if cached is not None:
        return cached
    mat = np.zeros((n_out, n_in))
    if n_in == 1:
        mat[:, 0] = 1.0
    elif n_out == 1:
        mat[0, 0] = 1.0
    else:
        scale = (n_in - 1) / (n_out - 1)
        for j in range(n_out):
            src = j * scale
            lo = min(int(np.floor(src)), n_in - 2)
            f = src - lo
            mat[j, lo] += 1.0 - f
            mat[j, lo + 1] += f
    _interp_cache[key] = mat
    return mat


def interpolate_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of the two trailing axes, corner-aligned.

    Accepts (..., H, W). When the target equals the source size the input
    is returned unchanged (resampling on the same grid is the identity).
    """
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"target size must be positive, got {out_h}x{out_w}")
    h, w = x.shape[-2], x.shape[-1]
    if (h, w) == (out_h, out_w):
        return x
    lead = x.shape[:-2]
    rows = _interp_matrix(h, out_h)
    cols_t = _interp_matrix(w, out_w).T

    flat = x.data.reshape(-1, h, w)
    # interpolate rows: (out_h, h) @ (h, n*w)
    step1 = _matmul_data(rows, flat.transpose(1, 0, 2).reshape(h, -1))
    step1 = step1.reshape(out_h, -1, w).transpose(1, 0, 2)
    # interpolate columns: (n*out_h, w) @ (w, out_w)
    step2 = _matmul_data(step1.reshape(-1, w), cols_t)
    data = step2.reshape(lead + (out_h, out_w))

    def backward(grad):
        g = grad.reshape(-1, out_h, out_w)
        back1 = _matmul_data(g.reshape(-1, out_w), cols_t.T).reshape(-1, out_h, w)
        back2 = _matmul_data(
            rows.T, back1.transpose(1, 0, 2).reshape(out_h, -1)
        ).reshape(h, -1, w).transpose(1, 0, 2)
        _accumulate(x, back2.reshape(x.shape))

    return _make(data, (x,), backward)


def assert_finite(t: Tensor, label: str) -> Tensor:
    """Raise NumericalError if `t` holds NaN or Inf; returns `t` unchanged."""
    if not np.all(np.isfinite(t.data)):
        raise NumericalError(f"non-finite values in {label}")
    return t
