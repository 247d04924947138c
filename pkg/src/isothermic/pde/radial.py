"""Radial reference solutions of ``(L - s) W = 0`` on balls about the origin."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import ArgumentError, DomainError, OracleError
from ..modelspace import ModelSpace, coordinate_radius

ORACLE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """``W(r)`` on ``[0, r_end]`` (coordinate radius) with ``W(r_end) = 1``.

    Stored as ``log W`` so exponentially small centre values keep full
    relative accuracy.
    """

    space: ModelSpace
    n: int
    s: float
    r_end: float
    _sol: object

    def log_value(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or np.any(r > self.r_end * (1 + 1e-12)):
            raise DomainError("radius outside the oracle interval")
        y = self._sol.sol(np.clip(r, 0.0, self.r_end))
        return y[1] - self._log_end

    @property
    def _log_end(self):
        return float(self._sol.y[1, -1])

    def __call__(self, r) -> np.ndarray:
        return np.exp(self.log_value(r))

    def derivative(self, r) -> np.ndarray:
        """``W'(r)``."""
        r = np.asarray(r, dtype=float)
        y = self._sol.sol(np.clip(r, 0.0, self.r_end))
        return y[0] * np.exp(y[1] - self._log_end)

    @property
    def center(self) -> float:
        return float(self(0.0))


def radial_oracle(space: ModelSpace, d_star: float, s: float, n: int | None = None) -> RadialProfile:
    """Solve ``((1+kr^2)/2)^2 (W'' + (n-1) W'/r) = s W``, ``W'(0) = 0``, ``W(a) = 1``
    on the coordinate interval ``[0, a]``, ``a = coordinate_radius(d_star)``.

    The logarithmic derivative ``y = W'/W`` obeys the Riccati equation
    ``y' = s / c(r)^2 - y^2 - (n-1) y / r`` whose solutions are attracted to
    the stable branch, so it is integrated forward from a series start at
    ``r = 0`` together with ``log W = int y``; the boundary condition then
    only fixes the additive constant of ``log W``.
    """
    n = space.n if n is None else int(n)
    if not s > 0:
        raise ArgumentError("s must be positive")
    if not d_star > 0:
        raise ArgumentError("radius must be positive")
    a = float(coordinate_radius(space, d_star))
    if space.k > 0 and d_star > space.max_radius:
        raise DomainError("ball leaves the hemisphere")
    k = space.k

    def c2(r):
        return (0.5 * (1.0 + k * r * r)) ** 2

    # Series start: y = q r + O(r^3) with q = s / (n c(0)^2) = 4 s / n.
    q = s / (n * c2(0.0))
    r0 = min(1e-3 / math.sqrt(q), a * 1e-3)
    y0 = q * r0
    logw0 = 0.5 * q * r0 * r0

    def rhs(r, z):
        y = z[0]
        return [s / c2(r) - y * y - (n - 1) * y / r, y]

    def jac(r, z):
        return [[-2 * z[0] - (n - 1) / r, 0.0], [1.0, 0.0]]

    method = "DOP853" if s * a * a < 1e4 else "Radau"
    extra = {"jac": jac} if method == "Radau" else {}
    sol = solve_ivp(
        rhs,
        (r0, a),
        [y0, logw0],
        method=method,
        rtol=ORACLE_RTOL,
        atol=[1e-14 * max(1.0, math.sqrt(s)), 1e-14],
        dense_output=True,
        **extra,
    )
    if not sol.success or not np.all(np.isfinite(sol.y)):
        raise OracleError(
            f"radial integration failed at s={s} ({sol.message}); use the large-s asymptotic branch instead"
        )
    return RadialProfile(space, n, float(s), a, _Dense(sol, r0, q))


class _Dense:
    """Dense output extended to ``[0, r0]`` by the series start."""

    def __init__(self, sol, r0, q):
        self.base = sol.sol
        self.y = sol.y
        self.r0 = r0
        self.q = q

    def sol(self, r):
        r = np.asarray(r, dtype=float)
        out = np.array(self.base(np.maximum(r, self.r0)), dtype=float)
        inner = r < self.r0
        if np.any(inner):
            out[0] = np.where(inner, self.q * r, out[0])
            out[1] = np.where(inner, 0.5 * self.q * r * r, out[1])
        return out
