"""Kernel backend selection.

The compiled extension ``eigopt._kernels`` is used when it imports cleanly;
otherwise the numpy fallback in ``eigopt._kernels_py`` is used. Setting
``EIGOPT_PURE_PYTHON=1`` forces the fallback. Elementwise maps on large
arrays always go to numpy (see ``ELEMENTWISE_CUTOFF``).
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("EIGOPT_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND

# above this many elements numpy's vectorised exp beats the scalar libm loop
ELEMENTWISE_CUTOFF = 512


def backends():
    """Available kernel implementations, keyed by backend name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out


def _as3(a, axis):
    a = np.asarray(a, dtype=np.float64)
    shape = a.shape
    pre = int(np.prod(shape[:axis], dtype=np.int64))
    post = int(np.prod(shape[axis + 1:], dtype=np.int64))
    return np.ascontiguousarray(a).reshape(pre, shape[axis], post)


def logsumexp(a, axis, impl=None):
    """Log-sum-exp of ``a`` along ``axis`` (axis removed)."""
    impl = impl or _impl
    a = np.asarray(a, dtype=np.float64)
    axis = axis % a.ndim
    out = impl.lse_middle(_as3(a, axis))
    return np.asarray(out).reshape(a.shape[:axis] + a.shape[axis + 1:])


def softmax(a, axis, lse=None, impl=None):
    """Normalised weights along ``axis``; pass ``lse`` to skip recomputation."""
    impl = impl or _impl
    a = np.asarray(a, dtype=np.float64)
    axis = axis % a.ndim
    a3 = _as3(a, axis)
    if lse is None:
        lse3 = np.asarray(impl.lse_middle(a3))
    else:
        lse3 = np.ascontiguousarray(lse, dtype=np.float64).reshape(a3.shape[0], a3.shape[2])
    return np.asarray(impl.softmax_middle(a3, lse3)).reshape(a.shape)


def _elementwise(name, x, impl):
    x = np.asarray(x, dtype=np.float64)
    if impl is None:
        impl = _impl if x.size <= ELEMENTWISE_CUTOFF else _kernels_py
    out = getattr(impl, name)(np.ascontiguousarray(x).reshape(-1))
    return np.asarray(out).reshape(x.shape)


def sigmoid(x, impl=None):
    return _elementwise("sigmoid", x, impl)


def softplus(x, impl=None):
    return _elementwise("softplus", x, impl)


def log_sigmoid(x, impl=None):
    return _elementwise("log_sigmoid", x, impl)
