"""Select the compiled loop kernels when available, else the Python ones.

Set ``DSRCLINK_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("DSRCLINK_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import cma_equalize, costas_track, pfb_clock_sync

    BACKEND = "python"
else:
    try:
        from ._kernels import cma_equalize, costas_track, pfb_clock_sync

        BACKEND = "cython"
    except ImportError:
        from ._kernels_py import cma_equalize, costas_track, pfb_clock_sync

        BACKEND = "python"

__all__ = ["BACKEND", "cma_equalize", "costas_track", "pfb_clock_sync"]
