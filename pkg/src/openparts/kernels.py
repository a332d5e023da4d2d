"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise (or when
``OPENPARTS_PURE_PYTHON=1`` is set) the numpy implementation takes over.
"""
from __future__ import annotations

import contextlib
import logging
import os
from types import ModuleType

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS: dict[str, ModuleType | None] = {"cython": _ckernels, "python": _pykernels}


def available_backends() -> list[str]:
    return [name for name, mod in _BACKENDS.items() if mod is not None]


def _initial() -> str:
    if os.environ.get("OPENPARTS_PURE_PYTHON", "") not in ("", "0") or _ckernels is None:
        return "python"
    return "cython"


_active = _initial()


def backend() -> str:
    """Name of the backend currently serving kernel calls."""
    return _active


def set_backend(name: str) -> None:
    global _active
    if _BACKENDS.get(name) is None:
        raise ValueError(f"kernel backend {name!r} is not available")
    _active = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def ray_cast_batch(*args):
    return _BACKENDS[_active].ray_cast_batch(*args)


def fps_buckets(*args):
    return _BACKENDS[_active].fps_buckets(*args)
