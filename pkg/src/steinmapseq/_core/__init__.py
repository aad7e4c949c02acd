"""Backend selection for the SVGD hot kernels.

The compiled extension is preferred; the numpy/fsum fallback is used when
it is missing or when ``STEINMAPSEQ_PURE_PYTHON=1`` is set.
"""

import os

from . import fallback

if os.environ.get("STEINMAPSEQ_PURE_PYTHON") == "1":
    _impl = fallback
    BACKEND = "python"
else:
    try:
        from . import _speedups as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = fallback
        BACKEND = "python"

assemble_direction = _impl.assemble_direction
svgd_direction = _impl.svgd_direction


def backend_name():
    return BACKEND
