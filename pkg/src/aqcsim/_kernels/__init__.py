"""Hot loops of the simulator, compiled when possible.

The Cython extension ``_ckernels`` is used when it was built; otherwise the
numpy module ``_pykernels`` is used. Set ``AQCSIM_KERNELS=python`` to force
the fallback or ``AQCSIM_KERNELS=cython`` to fail loudly when the extension
is missing.
"""

import importlib
import os

from . import _pykernels

_CHOICE = os.environ.get("AQCSIM_KERNELS", "auto").lower()


def load_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module(f"{__name__}._ckernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        load_backend("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


if _CHOICE == "python":
    _impl = _pykernels
elif _CHOICE == "cython":
    _impl = load_backend("cython")
elif _CHOICE == "auto":
    try:
        _impl = load_backend("cython")
    except ImportError:
        _impl = _pykernels
else:
    raise ImportError(f"AQCSIM_KERNELS must be auto, cython or python, got {_CHOICE!r}")

BACKEND = "python" if _impl is _pykernels else "cython"

measure_rows = _impl.measure_rows
test_rows = _impl.test_rows
overlap_rows = _impl.overlap_rows
product_gram = _impl.product_gram

__all__ = [
    "BACKEND",
    "available_backends",
    "load_backend",
    "measure_rows",
    "overlap_rows",
    "product_gram",
    "test_rows",
]
