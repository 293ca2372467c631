"""Hot inner loops: heightfield ray casting and grid shortest paths.

The compiled Cython backend is used when it has been built; otherwise the
numpy fallback is selected at import. Set ``SEMNAV_PURE_PYTHON=1`` to force
the fallback. Both backends return bit-identical results.
"""

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("SEMNAV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

MISS, SURFACE, CANOPY = _pykernels.MISS, _pykernels.SURFACE, _pykernels.CANOPY

raycast_heightfield = _impl.raycast_heightfield
grid_dijkstra = _impl.grid_dijkstra

__all__ = ["BACKEND", "MISS", "SURFACE", "CANOPY", "raycast_heightfield", "grid_dijkstra"]
