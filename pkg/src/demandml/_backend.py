"""Pick the compiled kernels when available, else the numpy fallback.

Set ``DEMANDML_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

try:
    if os.environ.get("DEMANDML_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _kernels
except ImportError:
    _kernels = None

kernels = _kernels if _kernels is not None else _fallback
COMPILED = _kernels is not None
NAME = "cython" if COMPILED else "python"


def get(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "cython":
        if _kernels is None:
            raise ImportError("compiled kernels are not built")
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
