"""Kernel backend selection.

The compiled Cython backend is used when its extension module imports; the
pure-Python mirror is the fallback. Both expose the same three operations
(``propagate``, ``propagate_constrained``, ``extract_design``) with identical
sampling semantics, so a given seed produces the same trajectories on either
backend. ``BACKEND`` names the one in use.
"""
from __future__ import annotations

from . import _pure
from .state import ParticleState

try:  # pragma: no cover - depends on the build environment
    from . import _speedups as _impl
    BACKEND = "cython"
except ImportError:  # pragma: no cover
    _impl = _pure
    BACKEND = "python"

propagate = _impl.propagate
propagate_constrained = _impl.propagate_constrained
extract_design = _impl.extract_design


def get_backend(name: str):
    """Explicit backend module lookup (used by parity tests and benchmarks)."""
    if name == "python":
        return _pure
    if name == "cython":
        from . import _speedups
        return _speedups
    raise ValueError(f"unknown backend {name!r}")


__all__ = ["BACKEND", "ParticleState", "propagate", "propagate_constrained",
           "extract_design", "get_backend"]
