"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The numba path is the default. Set ``GRASPFORGE_NUMBA=0`` to force the
numpy fallback; if numba is not importable the fallback is selected
automatically. Both backends are numerically interchangeable (see
tests/test_kernels.py and benchmarks/bench_kernels.py).
"""

import os

_want_numba = os.environ.get("GRASPFORGE_NUMBA", "1") != "0"

if _want_numba:
    try:
        from . import numba_impl as _impl
    except ImportError:  # numba missing or broken: degrade silently
        from . import numpy_impl as _impl

        _want_numba = False
else:
    from . import numpy_impl as _impl

BACKEND = "numba" if _want_numba else "numpy"

ray_mesh_first_hit = _impl.ray_mesh_first_hit
closest_point_on_mesh = _impl.closest_point_on_mesh
update_min_dists = _impl.update_min_dists
points_in_box = _impl.points_in_box

__all__ = [
    "BACKEND",
    "ray_mesh_first_hit",
    "closest_point_on_mesh",
    "update_min_dists",
    "points_in_box",
]
