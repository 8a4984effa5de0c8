"""Kernel backend selection.

The hot per-step kernels exist twice: compiled (Cython, _core) and pure
numpy (pyref).  The compiled module is preferred when importable; set
GINSHOP_KERNELS=py or =c to force a backend.  Integer kernels produce
identical results; float sums agree to round-off (summation association
differs).
"""

import os

from . import pyref

_choice = os.environ.get("GINSHOP_KERNELS", "auto")

_compiled = None
if _choice in ("auto", "c"):
    try:
        from . import _core as _compiled
    except ImportError:
        if _choice == "c":
            raise ImportError(
                "GINSHOP_KERNELS=c but the compiled kernel extension is not "
                "built; reinstall the package or use GINSHOP_KERNELS=py"
            ) from None

if _compiled is not None:
    _impl = _compiled
    BACKEND = "c"
else:
    _impl = pyref
    BACKEND = "py"

neighbor_sum = _impl.neighbor_sum
clb_fill = _impl.clb_fill


def available_backends():
    out = {"py": pyref}
    try:
        from . import _core

        out["c"] = _core
    except ImportError:
        pass
    return out
