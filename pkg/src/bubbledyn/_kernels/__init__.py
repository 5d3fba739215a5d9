"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable BUBBLEDYN_PURE_PYTHON=1 is set, the numpy versions are
used. ``BACKEND`` names the active one.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("BUBBLEDYN_PURE_PYTHON", "") != "1":
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

linear_gauss_steps = _active.linear_gauss_steps
exit_scan = _active.exit_scan
fleming_viot_steps = _active.fleming_viot_steps
exp_recursion = _active.exp_recursion
crossing_scan = _active.crossing_scan


def backends():
    """Available backend modules by name."""
    out = {"python": python_backend}
    if compiled_backend is not None:
        out["cython"] = compiled_backend
    return out
