"""Hot-kernel backend selection.

The compiled Cython extension is preferred when built; otherwise the NumPy
fallback is used. Set GD4MIMO_BACKEND=python or =cython to force a backend
(forcing cython raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import _pykernels

_choice = os.environ.get("GD4MIMO_BACKEND", "auto").lower()

if _choice not in ("auto", "python", "cython"):
    raise RuntimeError(f"GD4MIMO_BACKEND must be auto, python or cython: {_choice!r}")

_impl = _pykernels
if _choice != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "cython":
            raise RuntimeError(
                "GD4MIMO_BACKEND=cython but the compiled extension is not "
                "available; build it with: python setup.py build_ext --inplace"
            ) from None

babai_nearest = _impl.babai_nearest
klein_samples = _impl.klein_samples
brute_force = _impl.brute_force
mp_forward = _impl.mp_forward


def backend_name() -> str:
    """Name of the active kernel backend ('cython' or 'numpy')."""
    return _impl.BACKEND


def available_backends():
    """Names of the backends importable in this installation."""
    names = ["numpy"]
    try:
        from . import _ckernels  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names
