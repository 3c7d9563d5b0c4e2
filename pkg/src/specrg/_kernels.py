"""Selects the compiled kernel when it is importable, else the numpy one.

Set ``SPECRG_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pycore

BACKEND, _impl = "python", _pycore
if os.environ.get("SPECRG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass
scatter_monomial = _impl.scatter_monomial

__all__ = ["scatter_monomial", "BACKEND"]
