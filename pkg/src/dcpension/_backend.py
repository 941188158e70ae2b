"""Selects the compiled simulation kernel when available, else numpy."""

from __future__ import annotations

from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

DEFAULT_BACKEND = "cython" if _ckernels is not None else "python"


def get_kernel(name: str | None = None):
    """Return the ``simulate_block`` function of backend ``name``."""
    name = DEFAULT_BACKEND if name is None else name
    try:
        return BACKENDS[name].simulate_block
    except KeyError:
        raise ValueError(
            f"backend {name!r} unavailable; choose from {sorted(BACKENDS)}"
        ) from None


def available_backends() -> list[str]:
    return sorted(BACKENDS)
