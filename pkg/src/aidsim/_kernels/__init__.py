"""Hot numerical kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; setting the environment
variable ``AIDSIM_PURE_PYTHON=1`` forces the numpy implementation.
"""

import os

from . import _pykernels

try:
    if os.environ.get("AIDSIM_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _active
    BACKEND = "cython"
except ImportError:
    _active = _pykernels
    BACKEND = "python"

reaction_diffusion = _active.reaction_diffusion
newton_solve = _active.newton_solve
annulus_sums = _active.annulus_sums


def available_backends():
    """Mapping of backend name to kernel module for every importable backend."""
    backends = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        backends["cython"] = _ckernels
    return backends


__all__ = ["BACKEND", "reaction_diffusion", "newton_solve", "annulus_sums", "available_backends"]
