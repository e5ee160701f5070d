"""Hot simulation kernels.

Two interchangeable backends live here: ``_numba`` (``@njit`` loop kernels) and
``_numpy`` (vectorised fallback).  Both perform the same floating-point
operations in the same order, so trajectories agree bit-for-bit on one
platform.  Set ``SHEPHERD_NO_NUMBA=1`` to force the numpy path.
"""
import os

from . import _numpy

NO_NUMBA = os.environ.get("SHEPHERD_NO_NUMBA", "").lower() not in ("", "0", "false", "no")

try:
    if NO_NUMBA:
        raise ImportError("numba disabled by SHEPHERD_NO_NUMBA")
    from . import _numba as backend
    BACKEND = "numba"
except ImportError:
    backend = _numpy
    BACKEND = "numpy"

target_drift = backend.target_drift
advance_targets = backend.advance_targets
saturate = backend.saturate
advance_herders = backend.advance_herders
count_within = backend.count_within
heuristic_select = backend.heuristic_select
heuristic_commands = backend.heuristic_commands
heuristic_episode = backend.heuristic_episode

__all__ = [
    "BACKEND",
    "advance_herders",
    "advance_targets",
    "count_within",
    "heuristic_commands",
    "heuristic_episode",
    "heuristic_select",
    "saturate",
    "target_drift",
]
