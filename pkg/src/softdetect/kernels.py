"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when
``SOFTDETECT_PURE_PYTHON`` is set to a non-empty value, the numpy fallback
is loaded. Both expose the same functions.
"""

import importlib
import os

from . import _pykernels

BACKENDS = ("cython", "python")


def load_backend(name: str):
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("softdetect._ckernels")
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    out = []
    for name in BACKENDS:
        try:
            load_backend(name)
        except ImportError:
            continue
        out.append(name)
    return out


if os.environ.get("SOFTDETECT_PURE_PYTHON"):
    _impl, BACKEND = _pykernels, "python"
else:
    try:
        _impl, BACKEND = load_backend("cython"), "cython"
    except ImportError:
        _impl, BACKEND = _pykernels, "python"

bcjr = _impl.bcjr
pattern_llrs = _impl.pattern_llrs
