"""Backend selection for the three hot kernels.

The package ships two interchangeable implementations of the
performance-critical inner loops:

* ``numba``  -- just-in-time compiled loops (requires the optional numba
  dependency; compiled code is cached on disk across runs),
* ``numpy``  -- a pure numpy/vectorized fallback with identical semantics.

Each backend module exposes the same three functions:

* ``assemble_stress_blocks``   -- scatter the per-corner stress energy
  contributions into the packed vertex-block storage,
* ``eliminate_vertex_blocks``  -- factor every vertex block and form the
  Schur-complement triplets, elimination cache, and reduced right-hand side,
* ``recover_stress``           -- back-substitute the stress coefficients
  from the cached factors after the reduced solve.

The active backend is chosen by the ``MSMFE_BACKEND`` environment variable
("numba" or "numpy"), falling back to numba when it is importable and numpy
otherwise.  ``use_backend`` overrides the choice at runtime (used by tests
and benchmarks).  Both backends accumulate contributions in the same
deterministic (cell, corner, row, column) order, so each backend is
bit-reproducible run to run; across backends results agree to rounding.
"""

from __future__ import annotations

import os

__all__ = [
    "available_backends",
    "active_backend",
    "use_backend",
    "get_kernels",
]

_BACKEND_NAMES = ("numba", "numpy")

# Chosen lazily on first use so importing msmfe never pays numba's import cost
# unless the numba backend is actually exercised.
_active: str | None = None


def _numba_importable() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def available_backends() -> list[str]:
    """Backends usable in this environment, preferred first."""
    return ["numba", "numpy"] if _numba_importable() else ["numpy"]


def _default_backend() -> str:
    env = os.environ.get("MSMFE_BACKEND", "").strip().lower()
    if env:
        if env not in _BACKEND_NAMES:
            raise ValueError(
                f"MSMFE_BACKEND must be one of {_BACKEND_NAMES}, got {env!r}"
            )
        return env
    return "numba" if _numba_importable() else "numpy"


def use_backend(name: str) -> None:
    """Force a kernel backend ("numba" or "numpy") for this process."""
    if name not in _BACKEND_NAMES:
        raise ValueError(f"backend must be one of {_BACKEND_NAMES}, got {name!r}")
    if name == "numba" and not _numba_importable():
        raise ImportError("numba backend requested but numba is not installed")
    global _active
    _active = name


def active_backend() -> str:
    """Name of the backend that get_kernels() will return."""
    global _active
    if _active is None:
        _active = _default_backend()
    return _active


def get_kernels():
    """The module implementing the three kernels for the active backend."""
    name = active_backend()
    if name == "numba":
        from . import _numba as mod
    else:
        from . import _numpy as mod
    return mod
