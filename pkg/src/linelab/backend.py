"""Kernel backend selection.

The compiled extension is picked up when available; set LINELAB_PURE=1 to
force the pure-Python kernels. Both produce bit-identical results.
"""

import os

if os.environ.get("LINELAB_PURE"):
    from . import _pykernels as kernels
else:
    try:
        from . import _ckernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _pykernels as kernels

BACKEND = kernels.NAME
