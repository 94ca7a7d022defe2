"""Hot numeric kernels with two interchangeable backends.

`_numba_impl` carries @njit versions of the inner loops; `_numpy_impl` is a
vectorized pure-numpy fallback selected by SEMIDIRECT_NUMBA=0 (see _backend).
Both expose the same functions and agree to floating-point roundoff.
"""

from .._backend import NUMBA_ENABLED, backend_name

if NUMBA_ENABLED:
    from . import _numba_impl as _impl
else:
    from . import _numpy_impl as _impl

render_planes = _impl.render_planes
accumulate_photometric = _impl.accumulate_photometric
photometric_energy = _impl.photometric_energy
track_accumulate = _impl.track_accumulate
refine_point_depths = _impl.refine_point_depths
keypoint_orientations = _impl.keypoint_orientations
binary_descriptors = _impl.binary_descriptors

__all__ = [
    "NUMBA_ENABLED",
    "backend_name",
    "render_planes",
    "accumulate_photometric",
    "photometric_energy",
    "track_accumulate",
    "refine_point_depths",
    "keypoint_orientations",
    "binary_descriptors",
]
