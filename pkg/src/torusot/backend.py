"""Numeric backend selection.

The hot kernels (action minimization, Hamiltonian flow) exist twice: a
numba-jitted implementation and a pure-numpy reference.  The environment
variable TORUSOT_BACKEND picks one ("numba" or "numpy"); unset, the jitted
path is used when numba imports, with a silent fallback to numpy otherwise.
"""
from __future__ import annotations

import os

_ENV_VAR = "TORUSOT_BACKEND"
_active = None
_active_name = None


def _load(name: str):
    if name == "numpy":
        from . import _kernels_numpy as mod
    elif name == "numba":
        # the default TBB probe warns on older TBB installs; OpenMP is fine
        os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
        from . import _kernels_numba as mod
    else:
        raise ValueError(f"backend must be 'numba' or 'numpy', got {name!r}")
    return mod


def set_backend(name: str) -> None:
    """Force a backend programmatically (used by benchmarks and tests)."""
    global _active, _active_name
    _active = _load(name)
    _active_name = name


def active():
    """Return the active kernel module, resolving it on first use."""
    global _active, _active_name
    if _active is None:
        forced = os.environ.get(_ENV_VAR, "").strip().lower()
        if forced:
            set_backend(forced)
        else:
            try:
                set_backend("numba")
            except ImportError:
                set_backend("numpy")
    return _active


def backend_name() -> str:
    active()
    return _active_name
