"""Backend selection for the rendering kernels.

The environment variable ``PLANECAST_BACKEND`` picks the implementation:
``numba`` (default when importable) or ``numpy``. Both expose the same
functions; benchmarks/bench_backends.py compares them.
"""

from __future__ import annotations

import os
import warnings

from . import numpy_backend


def _load(name: str):
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        from . import numba_backend
        return numba_backend
    raise ValueError(f"unknown kernel backend {name!r} (use 'numba' or 'numpy')")


def _select() -> object:
    requested = os.environ.get("PLANECAST_BACKEND", "").strip().lower()
    if requested == "numpy":
        return numpy_backend
    try:
        from . import numba_backend
        return numba_backend
    except ImportError:
        if requested == "numba":
            warnings.warn("numba requested but not importable; using numpy kernels")
        return numpy_backend


_active = _select()

backend_name = _active.NAME
warp_planes = _active.warp_planes
warp_planes_backward = _active.warp_planes_backward
composite = _active.composite
composite_backward = _active.composite_backward


def get_backend(name: str):
    """Load a backend module by name, independent of the active selection."""
    return _load(name)
