"""Selects the compiled core when available, else the numpy fallback.

Set ``NCMOGP_PURE_PYTHON=1`` to force the fallback at import time.
"""
import os
import warnings

from . import _fallback

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("NCMOGP_PURE_PYTHON"):
    core = _compiled
else:
    core = _fallback


def available():
    """Names of the usable backends."""
    return ["python"] + (["cython"] if _compiled is not None else [])


def use(name: str):
    """Switch the active backend (``"cython"`` or ``"python"``); returns the old name."""
    global core
    old = core.NAME
    if name == "python":
        core = _fallback
    elif name == "cython":
        if _compiled is None:
            warnings.warn("compiled core not built; staying on the python backend")
            return old
        core = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    return old
