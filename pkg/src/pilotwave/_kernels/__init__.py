"""Backend selection for the hot trajectory kernels.

The compiled extension is preferred when importable; the NumPy implementation
is the always-available fallback.  Override with PILOTWAVE_BACKEND=python or
=cython (the latter raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import python_impl

_requested = os.environ.get("PILOTWAVE_BACKEND", "auto").lower()

if _requested not in ("auto", "python", "cython"):
    raise ImportError(f"PILOTWAVE_BACKEND must be auto|python|cython, got {_requested!r}")

if _requested == "python":
    active = python_impl
else:
    try:
        from . import _extcore as active  # type: ignore[no-redef]
    except ImportError:
        if _requested == "cython":
            raise
        active = python_impl

BACKEND = active.BACKEND_NAME
em_step_block = active.em_step_block
MAX_RETRIES = active.MAX_RETRIES


def get_backend(name: str = "auto"):
    """Return a specific kernel module (used by tests and the benchmark)."""
    if name == "python":
        return python_impl
    if name == "cython":
        from . import _extcore

        return _extcore
    return active
