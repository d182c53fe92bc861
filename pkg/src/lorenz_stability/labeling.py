"""Regime and stability labels for trajectory points.

Regimes split a trajectory at the mean of its own x-coordinates. A point is
stable when every neighbour in its window (``half_width`` before and after,
excluding the point itself) sits in one common regime.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, SequenceTooShort

DEFAULT_HALF_WIDTH = 5


class Regime(enum.IntEnum):
    LEFT = 0
    RIGHT = 1


class Stability(enum.IntEnum):
    """Unstable is the positive class everywhere."""

    STABLE = 0
    UNSTABLE = 1


@dataclass(frozen=True)
class WindowSpec:
    half_width: int = DEFAULT_HALF_WIDTH

    def __post_init__(self):
        if int(self.half_width) != self.half_width or self.half_width < 1:
            raise InvalidConfig(f"half_width must be an integer >= 1, got {self.half_width!r}")


def regime_labels(traj_or_x) -> np.ndarray:
    """Regime of every point as an int8 array (0 = left, 1 = right).

    Accepts a :class:`~lorenz_stability.dynamics.Trajectory` or a 1-D array of
    x-coordinates. Points exactly on the mean go left.
    """
    states = getattr(traj_or_x, "states", None)
    x = states[:, 0] if states is not None else np.asarray(traj_or_x, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise InvalidConfig("regime_labels needs a non-empty 1-D x series")
    return (x > x.mean()).astype(np.int8)


def stability_labels(regimes, window: WindowSpec | int = DEFAULT_HALF_WIDTH):
    """Label interior points stable/unstable from their neighbours' regimes.

    Returns ``(indices, labels)`` where ``indices`` runs over
    ``[w, N - 1 - w]`` and ``labels`` is int8 (1 = unstable). Boundary points
    have no full window and are left out.
    """
    w = window.half_width if isinstance(window, WindowSpec) else WindowSpec(window).half_width
    r = np.asarray(regimes, dtype=np.int64)
    n = len(r)
    if n <= 2 * w:
        raise SequenceTooShort(f"need more than {2 * w} points for half_width={w}, got {n}")

    csum = np.concatenate(([0], np.cumsum(r)))
    idx = np.arange(w, n - w)
    # number of right-regime neighbours, the centre excluded
    right = csum[idx + w + 1] - csum[idx - w] - r[idx]
    stable = (right == 0) | (right == 2 * w)
    return idx, (~stable).astype(np.int8)


def label_trajectory(traj, window: WindowSpec | int = DEFAULT_HALF_WIDTH):
    """Regimes for every point plus stability for interior points."""
    regimes = regime_labels(traj)
    idx, stab = stability_labels(regimes, window)
    return regimes, idx, stab
