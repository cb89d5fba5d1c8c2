"""Select the compiled kernels when importable, else the pure-Python twins.

Set ``ITEREX_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("ITEREX_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"

dinic = kernels.dinic
reachable = kernels.reachable
enumerate_min = kernels.enumerate_min
