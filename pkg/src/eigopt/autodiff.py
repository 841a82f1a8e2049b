"""Reverse-mode automatic differentiation over dense numpy arrays.

A :class:`Tape` records every operation applied to its :class:`Var` values.
Forward values are computed eagerly; :meth:`Tape.backward` then walks the
node list once, in reverse, accumulating vector-Jacobian products.

Operations accept any mix of :class:`Var` and array-like constants and follow
numpy broadcasting. When no input is a :class:`Var` the plain ndarray result
is returned and nothing is recorded, so the same model code serves both
differentiable training steps and large gradient-free evaluations.

Example::

    tape = Tape()
    x = tape.leaf(np.array([0.0, 1.0]))
    y = logsumexp(x, axis=0)
    grads = tape.backward(y)
    grads[x.index]          # softmax of x
"""
import numpy as np
from scipy import linalg as sla
from scipy import special

from . import kernels
from .errors import ContractError, DomainError, ShapeError

__all__ = [
    "Tape", "Var", "OPS", "record", "value_of", "is_var", "backward", "finite_difference",
    "add", "sub", "mul", "div", "neg", "exp", "log", "pow", "square", "sqrt", "sigmoid",
    "softplus", "log_sigmoid", "tanh", "sum", "mean", "dot", "matvec", "matmul",
    "triangular_solve", "logsumexp", "maximum", "relu", "select", "abs", "reshape",
    "getitem", "concat", "stack", "transpose", "broadcast_to", "log_ndtr", "log1mexp",
    "xlogy", "expm1", "log1p", "expand_dims", "squeeze", "lgamma", "minimum", "linear",
]

OPS = {}


def register(kind):
    def deco(fn):
        OPS[kind] = fn
        return fn
    return deco


class Var:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "index", "value")
    __array_ufunc__ = None  # make ndarray <op> Var dispatch to our reflected ops

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def T(self):
        return transpose(self)

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Tape:
    """Append-only record of operations; one tape per optimisation step."""

    def __init__(self):
        self._parents = []
        self._vjps = []
        self._shapes = []
        self._kinds = []
        self._leaves = []
        self._leaf_set = set()

    def __len__(self):
        return len(self._parents)

    def _append(self, kind, parents, vjp, value):
        self._parents.append(parents)
        self._vjps.append(vjp)
        self._shapes.append(value.shape)
        self._kinds.append(kind)
        return Var(self, len(self._parents) - 1, value)

    def leaf(self, value):
        """Register a differentiable input."""
        value = np.array(value, dtype=np.float64)
        var = self._append("leaf", (), None, value)
        self._leaves.append(var.index)
        self._leaf_set.add(var.index)
        return var

    def record(self, kind, inputs, **params):
        """Apply op ``kind`` to ``inputs`` and append the result as a node."""
        return record(kind, inputs, **params)

    def backward(self, root):
        """Gradients of scalar ``root`` w.r.t. every leaf, keyed by leaf index."""
        return backward(root)

    def kinds(self):
        return list(self._kinds)


def is_var(x):
    return isinstance(x, Var)


def value_of(x):
    """The numeric value of a Var or constant (gradient stopped)."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def record(kind, inputs, **params):
    try:
        fn = OPS[kind]
    except KeyError:
        raise ContractError(f"unknown op kind {kind!r}") from None
    tape = None
    values = []
    for x in inputs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ContractError("inputs recorded on different tapes")
            values.append(x.value)
        else:
            values.append(x)
    try:
        out, vjp = fn(*values, **params)
    except ValueError as err:
        if isinstance(err, (DomainError, ShapeError, ContractError)):
            raise
        raise ShapeError(f"{kind}: {err}") from err
    if tape is None:
        return out
    parents = tuple(x.index if isinstance(x, Var) else None for x in inputs)
    return tape._append(kind, parents, vjp, np.asarray(out, dtype=np.float64))


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(root):
    """Reverse sweep from scalar ``root``; returns ``{leaf index: gradient}``."""
    if not isinstance(root, Var):
        raise ContractError("backward root must be a Var recorded on a tape")
    if root.value.size != 1:
        raise ContractError(f"backward root must be scalar, got shape {root.shape}")
    tape = root.tape
    parents, vjps, shapes = tape._parents, tape._vjps, tape._shapes
    grads = [None] * (root.index + 1)
    grads[root.index] = np.ones(root.shape)
    for i in range(root.index, -1, -1):
        g = grads[i]
        if g is None:
            continue
        vjp = vjps[i]
        if vjp is None:
            continue
        if i not in tape._leaf_set:
            grads[i] = None
        pg = vjp(g)
        for p, gp in zip(parents[i], pg):
            if p is None or gp is None:
                continue
            gp = _unbroadcast(np.asarray(gp, dtype=np.float64), shapes[p])
            grads[p] = gp if grads[p] is None else grads[p] + gp
    out = {}
    for leaf in tape._leaves:
        if leaf <= root.index and grads[leaf] is not None:
            out[leaf] = grads[leaf]
        else:
            out[leaf] = np.zeros(shapes[leaf])
    return out


def finite_difference(f, x, h=1e-4):
    """Central-difference gradient of scalar ``f`` at ``x`` (error O(h^2))."""
    if h <= 0:
        raise ContractError("finite-difference step must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x.copy()))
        flat[i] = orig - h
        fm = float(f(x.copy()))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise DomainError(f"non-finite function value near coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


# --------------------------------------------------------------------------
# op implementations: fn(*values, **params) -> (value, vjp(g) -> tuple)


def _arr(x):
    return np.asarray(x, dtype=np.float64)


@register("add")
def _add(a, b):
    return _arr(a) + b, lambda g: (g, g)


@register("sub")
def _sub(a, b):
    return _arr(a) - b, lambda g: (g, -g)


@register("mul")
def _mul(a, b):
    a, b = _arr(a), _arr(b)
    return a * b, lambda g: (g * b, g * a)


@register("div")
def _div(a, b):
    a, b = _arr(a), _arr(b)
    if np.any(b == 0):
        raise DomainError("division by zero")
    out = a / b
    return out, lambda g: (g / b, -g * out / b)


@register("neg")
def _neg(a):
    return -_arr(a), lambda g: (-g,)


@register("exp")
def _exp(a):
    out = np.exp(_arr(a))
    return out, lambda g: (g * out,)


@register("log")
def _log(a):
    a = _arr(a)
    if np.any(a <= 0):
        raise DomainError("log of non-positive value")
    return np.log(a), lambda g: (g / a,)


@register("pow")
def _pow(a, p):
    a = _arr(a)
    if np.any(a < 0) and not float(p).is_integer():
        raise DomainError("fractional power of a negative value")
    if p < 0 and np.any(a == 0):
        raise DomainError("negative power of zero")
    out = a ** p
    return out, lambda g: (g * p * a ** (p - 1),)


@register("square")
def _square(a):
    a = _arr(a)
    return a * a, lambda g: (2.0 * g * a,)


@register("sqrt")
def _sqrt(a):
    a = _arr(a)
    if np.any(a < 0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(a)
    return out, lambda g: (np.where(out > 0, g / (2.0 * np.where(out > 0, out, 1.0)), 0.0),)


@register("sigmoid")
def _sigmoid(a):
    out = kernels.sigmoid(a)
    return out, lambda g: (g * out * (1.0 - out),)


@register("softplus")
def _softplus(a):
    a = _arr(a)
    out = kernels.softplus(a)
    return out, lambda g: (g * kernels.sigmoid(a),)


@register("log_sigmoid")
def _log_sigmoid(a):
    a = _arr(a)
    out = kernels.log_sigmoid(a)
    return out, lambda g: (g * kernels.sigmoid(-a),)


@register("tanh")
def _tanh(a):
    out = np.tanh(_arr(a))
    return out, lambda g: (g * (1.0 - out * out),)


@register("expm1")
def _expm1(a):
    a = _arr(a)
    out = np.expm1(a)
    return out, lambda g: (g * (out + 1.0),)


@register("log1p")
def _log1p(a):
    a = _arr(a)
    if np.any(a <= -1):
        raise DomainError("log1p of a value <= -1")
    return np.log1p(a), lambda g: (g / (1.0 + a),)


@register("abs")
def _abs(a):
    a = _arr(a)
    return np.abs(a), lambda g: (g * np.sign(a),)


@register("log_ndtr")
def _log_ndtr(a):
    a = _arr(a)
    out = special.log_ndtr(a)
    # d/dx log Phi(x) = phi(x) / Phi(x); asymptotic Mills ratio in the far left tail
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        direct = np.exp(-0.5 * a * a - 0.5 * np.log(2 * np.pi) - out)
        inv2 = 1.0 / (a * a)
        tail = -a / (1.0 - inv2 + 3.0 * inv2 * inv2)
    d = np.where(a < -20.0, tail, direct)
    return out, lambda g: (g * d,)


@register("lgamma")
def _lgamma(a):
    a = _arr(a)
    if np.any(a <= 0):
        raise DomainError("lgamma of a non-positive value")
    return special.gammaln(a), lambda g: (g * special.digamma(a),)


@register("log1mexp")
def _log1mexp(a):
    """log(1 - exp(-a)) for a >= 0; -inf at a = 0."""
    a = _arr(a)
    if np.any(a < 0):
        raise DomainError("log1mexp requires a >= 0")
    with np.errstate(divide="ignore"):
        out = np.where(a > 0.693, np.log1p(-np.exp(-a)), np.log(-np.expm1(-a)))

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(g == 0, 0.0, g / np.expm1(a))
        return (d,)
    return out, vjp


@register("xlogy")
def _xlogy(x, y):
    """x * log(y) with the convention 0 * log(0) = 0."""
    x, y = _arr(x), _arr(y)
    if np.any(y < 0):
        raise DomainError("xlogy of a negative value")
    out = special.xlogy(x, y)

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            gx = np.where(x == 0, 0.0, g * np.log(np.where(y > 0, y, 1.0)))
            gx = np.where((x != 0) & (y == 0), -np.inf * np.sign(g), gx)
            gy = np.where(x == 0, 0.0, g * x / np.where(y > 0, y, np.inf))
        return gx, gy
    return out, vjp


@register("max")
def _max(a, b):
    """Elementwise maximum; ties send the gradient to ``a``."""
    a, b = _arr(a), _arr(b)
    mask = a >= b
    return np.where(mask, a, b), lambda g: (g * mask, g * ~mask)


@register("select")
def _select(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    a, b = _arr(a), _arr(b)
    return np.where(cond, a, b), lambda g: (None, np.where(cond, g, 0.0), np.where(cond, 0.0, g))


@register("sum")
def _sum(a, axis=None, keepdims=False):
    a = _arr(a)
    shape = a.shape
    out = a.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)
    return out, vjp


@register("logsumexp")
def _logsumexp(a, axis=-1, keepdims=False):
    a = _arr(a)
    ax = axis % a.ndim
    out = kernels.logsumexp(a, ax)

    def vjp(g):
        w = kernels.softmax(a, ax, lse=out)
        return (np.expand_dims(g, ax) * w,)
    if keepdims:
        res = np.expand_dims(out, ax)
        return res, lambda g: vjp(np.squeeze(g, ax))
    return out, vjp


@register("dot")
def _dot(a, b):
    """Inner product over the last axis (batched)."""
    a, b = _arr(a), _arr(b)
    if a.shape[-1:] != b.shape[-1:]:
        raise ShapeError(f"dot: last axes differ {a.shape} vs {b.shape}")
    out = (a * b).sum(axis=-1)
    return out, lambda g: (g[..., None] * b, g[..., None] * a)


@register("matmul")
def _matmul(a, b):
    a, b = _arr(a), _arr(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands with ndim >= 2; use matvec/dot")
    out = a @ b
    return out, lambda g: (g @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ g)


@register("matvec")
def _matvec(m, v):
    """``m @ v`` with ``m`` of shape (..., r, c) and ``v`` of shape (..., c)."""
    m, v = _arr(m), _arr(v)
    if m.ndim < 2 or m.shape[-1] != v.shape[-1]:
        raise ShapeError(f"matvec: incompatible shapes {m.shape}, {v.shape}")
    out = np.einsum("...ij,...j->...i", m, v)

    def vjp(g):
        return g[..., :, None] * v[..., None, :], np.einsum("...ij,...i->...j", m, g)
    return out, vjp


@register("linear")
def _linear(x, w):
    """``x @ w.T`` for a weight matrix ``w`` of shape (out, in); ``x`` is (..., in)."""
    x, w = _arr(x), _arr(w)
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: incompatible shapes {x.shape}, {w.shape}")
    out = x @ w.T

    def vjp(g):
        gw = g.reshape(-1, w.shape[0]).T @ x.reshape(-1, w.shape[1])
        return g @ w, gw
    return out, vjp


@register("triangular_solve")
def _triangular_solve(lower, b):
    """Solve ``L x = b`` for lower-triangular ``L`` (d, d); ``b`` has shape (..., d)."""
    L, b = _arr(lower), _arr(b)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or b.shape[-1] != L.shape[0]:
        raise ShapeError(f"triangular_solve: shapes {L.shape}, {b.shape}")
    if np.any(np.diag(L) == 0):
        raise DomainError("singular triangular matrix")
    d = L.shape[0]
    flat = b.reshape(-1, d)
    x = sla.solve_triangular(L, flat.T, lower=True, check_finite=False).T
    out = x.reshape(b.shape)

    def vjp(g):
        gb = sla.solve_triangular(L, g.reshape(-1, d).T, lower=True, trans="T", check_finite=False).T
        gL = -np.tril(gb.T @ x)
        return gL, gb.reshape(b.shape)
    return out, vjp


@register("reshape")
def _reshape(a, shape):
    a = _arr(a)
    return a.reshape(shape), lambda g: (g.reshape(a.shape),)


@register("transpose")
def _transpose(a, axes=None):
    a = _arr(a)
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2) if a.ndim >= 2 else ()
    inv = np.argsort(axes)
    return np.transpose(a, axes), lambda g: (np.transpose(g, inv),)


@register("broadcast_to")
def _broadcast_to(a, shape):
    a = _arr(a)
    return np.broadcast_to(a, shape), lambda g: (g,)


@register("getitem")
def _getitem(a, idx):
    a = _arr(a)

    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(p, (slice, int, type(Ellipsis), type(None))) for p in parts)

    def vjp(g):
        out = np.zeros(a.shape)
        if basic:
            out[idx] += g
        else:
            np.add.at(out, idx, g)
        return (out,)
    return a[idx], vjp


@register("concat")
def _concat(*arrays, axis=0):
    arrays = [_arr(x) for x in arrays]
    sizes = np.cumsum([x.shape[axis] for x in arrays])[:-1]
    out = np.concatenate(arrays, axis=axis)
    return out, lambda g: tuple(np.split(g, sizes, axis=axis))


# --------------------------------------------------------------------------
# functional API


def add(a, b):
    return record("add", (a, b))


def sub(a, b):
    return record("sub", (a, b))


def mul(a, b):
    return record("mul", (a, b))


def div(a, b):
    return record("div", (a, b))


def neg(a):
    return record("neg", (a,))


def exp(a):
    return record("exp", (a,))


def log(a):
    return record("log", (a,))


def pow(a, p):
    return record("pow", (a,), p=p)


def square(a):
    return record("square", (a,))


def sqrt(a):
    return record("sqrt", (a,))


def sigmoid(a):
    return record("sigmoid", (a,))


def softplus(a):
    return record("softplus", (a,))


def log_sigmoid(a):
    return record("log_sigmoid", (a,))


def tanh(a):
    return record("tanh", (a,))


def expm1(a):
    return record("expm1", (a,))


def log1p(a):
    return record("log1p", (a,))


def abs(a):
    return record("abs", (a,))


def log_ndtr(a):
    return record("log_ndtr", (a,))


def lgamma(a):
    return record("lgamma", (a,))


def log1mexp(a):
    return record("log1mexp", (a,))


def xlogy(x, y):
    return record("xlogy", (x, y))


def maximum(a, b):
    return record("max", (a, b))


def minimum(a, b):
    return neg(maximum(neg(a), neg(b)))


def relu(a):
    return record("max", (a, 0.0))


def select(cond, a, b):
    return record("select", (np.asarray(cond, dtype=bool), a, b))


def sum(a, axis=None, keepdims=False):
    return record("sum", (a,), axis=axis, keepdims=keepdims)


def mean(a, axis=None):
    n = value_of(a).size if axis is None else value_of(a).shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def logsumexp(a, axis=-1, keepdims=False):
    return record("logsumexp", (a,), axis=axis, keepdims=keepdims)


def dot(a, b):
    return record("dot", (a, b))


def matmul(a, b):
    return record("matmul", (a, b))


def matvec(m, v):
    return record("matvec", (m, v))


def linear(x, w):
    return record("linear", (x, w))


def triangular_solve(lower, b):
    return record("triangular_solve", (lower, b))


def reshape(a, shape):
    return record("reshape", (a,), shape=tuple(shape))


def transpose(a, axes=None):
    return record("transpose", (a,), axes=None if axes is None else tuple(axes))


def broadcast_to(a, shape):
    return record("broadcast_to", (a,), shape=tuple(shape))


def getitem(a, idx):
    return record("getitem", (a,), idx=idx)


def concat(arrays, axis=0):
    return record("concat", tuple(arrays), axis=axis)


def expand_dims(a, axis):
    shape = list(value_of(a).shape)
    axis = axis if axis >= 0 else len(shape) + 1 + axis
    shape.insert(axis, 1)
    return reshape(a, shape)


def squeeze(a, axis):
    shape = list(value_of(a).shape)
    if shape[axis] != 1:
        raise ShapeError(f"cannot squeeze axis {axis} of shape {tuple(shape)}")
    del shape[axis]
    return reshape(a, shape)


def stack(arrays, axis=0):
    return concat([expand_dims(a, axis) for a in arrays], axis=axis)
