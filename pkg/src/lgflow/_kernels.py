"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``LGF_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["cython"] = _ckernels

if os.environ.get("LGF_PURE_PYTHON", "") == "1" or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def get(name=None):
    """Kernel module by name; default is the active backend."""
    return BACKENDS[name or BACKEND]
