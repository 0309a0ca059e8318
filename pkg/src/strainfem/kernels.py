"""Backend selection for the per-tetrahedron kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback is used.  Setting ``STRAINFEM_PURE_PYTHON=1`` forces the fallback.
"""
import importlib
import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)

_NAMES = (
    "signed_volumes",
    "dof_maps",
    "invert_blocks",
    "barycentric_gradients",
    "sym_grad_operators",
    "weighted_blocks",
)


def load_backend(name):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        return importlib.import_module("strainfem._kernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    out = ["python"]
    try:
        load_backend("cython")
    except ImportError:
        pass
    else:
        out.insert(0, "cython")
    return out


if os.environ.get("STRAINFEM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        _impl = load_backend("cython")
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"
logger.debug("strainfem kernels: %s backend", BACKEND)

LOCAL_EDGES = _kernels_py.LOCAL_EDGES
signed_volumes = _impl.signed_volumes
dof_maps = _impl.dof_maps
invert_blocks = _impl.invert_blocks
barycentric_gradients = _impl.barycentric_gradients
sym_grad_operators = _impl.sym_grad_operators
weighted_blocks = _impl.weighted_blocks
