"""Select the kernel backend at import time.

``UNIWALK_BACKEND=python`` forces the pure-Python kernels; otherwise the
compiled extension is used when importable.
"""

import os
import warnings

from . import _pykernels

python_kernels = _pykernels

if os.environ.get("UNIWALK_BACKEND", "").lower() == "python":
    kernels = _pykernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        warnings.warn("uniwalk: compiled kernels unavailable, using the pure-Python fallback",
                      RuntimeWarning, stacklevel=2)
        kernels = _pykernels

BACKEND = kernels.NAME


def compiled_kernels():
    """Return the compiled module or None."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels
