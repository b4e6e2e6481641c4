"""Backend selection for the convolution kernels.

The compiled extension (``srecnn._kernels``) is used when it was built;
otherwise the numpy implementations in ``srecnn._kernels_py`` are used.
Temporal kernels are numpy in both backends.
"""

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_active = "compiled" if _compiled is not None else "python"


def available_backends():
    return ["python"] + (["compiled"] if _compiled is not None else [])


def get_backend():
    return _active


def set_backend(name):
    """Switch the spatial convolution backend; returns the previous one."""
    global _active
    if name not in available_backends():
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    prev, _active = _active, name
    return prev


def _impl():
    return _compiled if _active == "compiled" else _kernels_py


def conv2d_forward(x, k):
    return _impl().conv2d_forward(np.ascontiguousarray(x), np.ascontiguousarray(k))


def conv2d_grad_input(g, k):
    return _impl().conv2d_grad_input(np.ascontiguousarray(g), np.ascontiguousarray(k))


def conv2d_grad_kernel(g, x, p):
    return _impl().conv2d_grad_kernel(np.ascontiguousarray(g), np.ascontiguousarray(x), p)


conv1d_forward = _kernels_py.conv1d_forward
conv1d_grad_input = _kernels_py.conv1d_grad_input
conv1d_grad_kernel = _kernels_py.conv1d_grad_kernel
