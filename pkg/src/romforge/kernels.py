"""Backend selection for the hot loops.

The compiled extension ``romforge._ckernels`` is used when it was built;
otherwise the pure-Python module is used. Set ``ROMFORGE_PURE_PYTHON=1``
to force the fallback (useful for comparing the two).
"""
import os

from romforge import _pykernels

try:
    if os.environ.get("ROMFORGE_PURE_PYTHON") == "1":
        raise ImportError("pure-Python backend requested")
    from romforge import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

jacobi_sweeps = _impl.jacobi_sweeps
csr_matmat = _impl.csr_matmat


def backends():
    """Return the available kernel modules keyed by name."""
    out = {"python": _pykernels}
    try:
        from romforge import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
