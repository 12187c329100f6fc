"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; set
``TVCN_PURE_PYTHON=1`` to force the pure-Python fallback. Both backends
expose the same ``fluid_solve`` and ``controller_run`` signatures.
"""

import os

from . import reference

compiled = None
if os.environ.get("TVCN_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _core as compiled  # type: ignore[no-redef]
    except ImportError:
        compiled = None

active = compiled if compiled is not None else reference

SCHEME_CODES = {
    "proposed": reference.SCHEME_PROPOSED,
    "mo": reference.SCHEME_MO,
    "la": reference.SCHEME_LA,
    "lawd": reference.SCHEME_LAWD,
}


def backend_name():
    return "compiled" if active is compiled and compiled is not None else "python"
