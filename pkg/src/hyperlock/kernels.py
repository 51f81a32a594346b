"""Kernel backend selection.

The compiled extension is used when it was built; setting the environment
variable ``HYPERLOCK_PURE=1`` forces the numpy implementation.
"""
import os

from . import _sweep_py

BACKEND = "numpy"
cumulative = _sweep_py.cumulative
char_sweep = _sweep_py.char_sweep

if os.environ.get("HYPERLOCK_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _sweep as _compiled
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        cumulative = _compiled.cumulative
        char_sweep = _compiled.char_sweep

__all__ = ["BACKEND", "cumulative", "char_sweep"]
