"""Kernel lane selection: compiled extension when available, else pure Python.

Set ``BALLWORLD_PURE=1`` to force the pure-Python lane.  ``LANE`` reports
which one is active ("compiled" or "pure").
"""

import os

if os.environ.get("BALLWORLD_PURE", "") == "1":
    from . import _cdt_core_py as cdt_core
    from . import _chain_eval_py as chain_eval
    LANE = "pure"
else:
    try:
        from . import _cdt_core as cdt_core
        from . import _chain_eval as chain_eval
        LANE = "compiled"
    except ImportError:
        from . import _cdt_core_py as cdt_core
        from . import _chain_eval_py as chain_eval
        LANE = "pure"
