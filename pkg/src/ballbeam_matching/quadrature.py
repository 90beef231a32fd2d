"""Spectral cumulative integration on ``[0, x]``.

Every integral in the matching family has the form ``int_0^alpha f``, possibly
nested. Values are sampled at Chebyshev-Lobatto points mapped onto
``[0, alpha]`` and integrated with a fixed Chebyshev integration matrix, so a
nested integral costs one matrix-vector product per level and the result is a
smooth function of the upper limit (finite differences of it behave).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as cheb

DEFAULT_NODES = 40


@lru_cache(maxsize=8)
def _rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    # Lobatto points ordered from -1 to +1; the last node is the upper limit.
    t = -np.cos(np.pi * np.arange(n) / (n - 1))
    vander = cheb.chebvander(t, n - 1)
    integ = np.empty((n, n))
    for j in range(n):
        unit = np.zeros(n)
        unit[j] = 1.0
        integ[:, j] = cheb.chebval(t, cheb.chebint(unit, lbnd=-1.0))
    mat = np.linalg.solve(vander.T, integ.T).T
    t.setflags(write=False)
    mat.setflags(write=False)
    return t, mat


class CumulativeGrid:
    """Nodes on ``[0, upper]`` with a cumulative integration operator.

    ``grid.cumulative(values)`` returns ``int_0^{x_i} f`` at every node, where
    ``values`` holds ``f`` sampled at ``grid.x``. The last entry is the
    integral over the whole interval. ``upper`` may be negative or zero.
    """

    __slots__ = ("upper", "x", "_scale", "_mat")

    def __init__(self, upper: float, n: int = DEFAULT_NODES):
        t, mat = _rule(n)
        self.upper = float(upper)
        self.x = 0.5 * self.upper * (1.0 + t)
        self._scale = 0.5 * self.upper
        self._mat = mat

    def cumulative(self, values: np.ndarray) -> np.ndarray:
        return self._scale * (self._mat @ values)


def integrate(func, upper: float, n: int = DEFAULT_NODES) -> float:
    """``int_0^upper func(x) dx`` for a vectorised smooth ``func``."""
    grid = CumulativeGrid(upper, n)
    return float(grid.cumulative(func(grid.x))[-1])
