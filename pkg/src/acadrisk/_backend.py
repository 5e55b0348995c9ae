"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when
``ACADRISK_PURE_PYTHON=1`` is set, the numpy/Python versions are used.
"""
import logging
import os

from . import _pykernels

logger = logging.getLogger(__name__)

kernels = _pykernels
NAME = "python"

if os.environ.get("ACADRISK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:
        logger.debug("compiled kernels unavailable, using pure Python fallback")
    else:
        kernels = _ckernels
        NAME = "cython"


def get(name=None):
    """Return the kernel module named ``name`` ('cython' or 'python'), or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
