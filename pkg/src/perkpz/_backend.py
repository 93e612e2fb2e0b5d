"""Select the compiled kernels when available, else the numpy fallback.

Set ``PERKPZ_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
level_factor = _fallback.level_factor
cross_contract = _fallback.cross_contract
tasep_run = _fallback.tasep_run

if os.environ.get("PERKPZ_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        level_factor = _kernels.level_factor
        cross_contract = _kernels.cross_contract
        tasep_run = _kernels.tasep_run
