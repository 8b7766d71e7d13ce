"""Split-scan backend selection.

The compiled extension is used when it imported cleanly; otherwise the numpy
fallback.  ``use_backend`` switches explicitly (tests and benchmarks compare
both).
"""
from __future__ import annotations

import contextlib

import numpy as np

from . import _scan_py

try:
    from . import _scan as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _scan_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = "compiled" if _compiled is not None else "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    _active = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def split_gains(xs: np.ndarray, rows: np.ndarray, code: int) -> np.ndarray:
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    return _BACKENDS[_active].split_gains(xs, rows, code)
