"""Hot simulator kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise (or
when ``ZMERGE_PURE_PYTHON=1``) the pure-Python ``_pykernels`` module is used.
``BACKEND`` names the active implementation.
"""

import os

from zmerge._kernels import _pykernels as pykernels

ckernels = None
if os.environ.get("ZMERGE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from zmerge._kernels import _ckernels as ckernels
    except ImportError:  # extension not built
        ckernels = None

_impl = ckernels if ckernels is not None else pykernels
BACKEND = "cython" if ckernels is not None else "python"

lane_neighbors = _impl.lane_neighbors
leader_follower_at = _impl.leader_follower_at
idm_scalar = _impl.idm_scalar
idm_batch = _impl.idm_batch
euler_step = _impl.euler_step
collision_pairs = _impl.collision_pairs
longest_slow_run = _impl.longest_slow_run
nearest_within = _impl.nearest_within

__all__ = [
    "BACKEND", "ckernels", "pykernels", "lane_neighbors", "leader_follower_at", "idm_scalar",
    "idm_batch", "euler_step", "collision_pairs", "longest_slow_run", "nearest_within",
]
