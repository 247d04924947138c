"""Isometries of the conformal models and the operator-invariance check.

Every isometry is stored as ``x -> A @ T_z(x)`` where ``T_z`` is the
Moebius map sending ``z`` to the origin,

    T_z(x) = [(1 + k|z|^2)(x - z) + k|x - z|^2 z] / (1 + 2k x.z + k^2 |x|^2 |z|^2),

and ``A`` is orthogonal.  For ``k < 0`` this is the classical Poincare-ball
map (with the curvature radius scaled in), for ``k = 0`` a translation and
for ``k > 0`` a rotation of the sphere read through the stereographic chart.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, CoverageError, PoleError
from .modelspace import ModelSpace

_POLE_TOL = 1e-14


def _mobius(k, z, x):
    x = np.asarray(x, dtype=float)
    if k == 0:
        return x - z
    zz = z.dot(z)
    diff = x - z
    num = (1 + k * zz) * diff + k * np.sum(diff * diff, axis=-1)[..., None] * z
    den = 1 + 2 * k * (x @ z) + k * k * np.sum(x * x, axis=-1) * zz
    if k > 0 and np.any(den <= _POLE_TOL * (1 + k * zz) ** 2):
        raise PoleError("spherical Moebius map evaluated at the antipode of its centre")
    return num / den[..., None]


@dataclass(frozen=True, eq=False)
class Isometry:
    """Metric isometry ``x -> A @ T_z(x)`` of a model space."""

    space: ModelSpace
    z: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).reshape(self.space.n)
        A = np.asarray(self.A, dtype=float).reshape(self.space.n, self.space.n)
        if np.abs(A @ A.T - np.eye(self.space.n)).max() > 1e-12:
            raise ArgumentError("linear part of an isometry must be orthogonal")
        if self.space.k < 0:
            # For k > 0 the centre may be any point of the chart (the whole
            # sphere moves); for k < 0 it must lie in the ball.
            self.space.check(z)
        elif not np.all(np.isfinite(z)):
            raise ArgumentError("isometry centre must be finite")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "A", A)

    @property
    def kind(self) -> str:
        k = self.space.k
        if k == 0:
            return "euclidean-motion"
        return "hyperbolic-moebius" if k < 0 else "spherical-moebius"

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _mobius(self.space.k, self.z, x) @ self.A.T

    __call__ = apply

    def inverse(self) -> "Isometry":
        k, z, A = self.space.k, self.z, self.A

        def f_inv(y):
            return _mobius(k, -z, np.asarray(y) @ A)

        return _from_map(self.space, f_inv, center=self.apply(np.zeros(self.space.n)))

    def compose(self, first: "Isometry") -> "Isometry":
        """The isometry ``x -> self(first(x))``."""
        return compose(self, first)


def _from_map(space, f, center):
    """Rebuild ``(z, A)`` for an isometry ``f`` with ``f(center) = 0``.

    ``f o T_center^{-1}`` fixes the origin and is therefore linear; its matrix
    is read off on a few probe vectors and polished to the nearest orthogonal
    matrix.
    """
    n = space.n
    center = np.asarray(center, dtype=float)
    t = 0.25 * (space.rho if space.rho is not None else 1.0)
    if space.k > 0:
        # The pole of T_{-center} sits at coordinate norm rho^2/|center|.
        t = min(t, 0.25 * space.rho**2 / max(np.linalg.norm(center), 1e-300))
    probes = _mobius(space.k, -center, t * np.eye(n))
    M = np.asarray(f(probes)).T / t
    u, _, vt = np.linalg.svd(M)
    return Isometry(space, center, u @ vt)


def identity(space: ModelSpace) -> Isometry:
    return Isometry(space, np.zeros(space.n), np.eye(space.n))


def rotation(space: ModelSpace, A) -> Isometry:
    """Orthogonal map about the origin (an isometry for every k)."""
    return Isometry(space, np.zeros(space.n), A)


def rotation_matrix_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def to_origin(space: ModelSpace, z, A=None) -> Isometry:
    """Isometry sending ``z`` to the origin (followed by the orthogonal ``A``)."""
    z = space.check(z)
    return Isometry(space, z, np.eye(space.n) if A is None else A)


def from_origin(space: ModelSpace, p, A=None) -> Isometry:
    """Isometry sending the origin to ``p``: the inverse of ``to_origin(p)``."""
    return to_origin(space, p, A).inverse()


def compose(second: Isometry, first: Isometry) -> Isometry:
    """``second o first`` (``first`` is applied first)."""
    if second.space != first.space:
        raise ArgumentError("cannot compose isometries of different spaces")
    space = first.space
    center = first.inverse().apply(second.z)
    return _from_map(space, lambda x: second.apply(first.apply(x)), center)


def apply_L_fd(space: ModelSpace, u, x, h: float) -> np.ndarray:
    """Central-difference evaluation of ``((1+k|x|^2)/2)^2 * Laplacian(u)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u0 = np.asarray(u(x), dtype=float)
    lap = np.zeros_like(u0)
    for i in range(space.n):
        e = np.zeros(space.n)
        e[i] = h
        lap += np.asarray(u(x + e)) - 2 * u0 + np.asarray(u(x - e))
    coef = (0.5 * (1 + space.k * np.sum(x * x, axis=-1))) ** 2
    return coef * lap / h**2


def invariance_residual(space: ModelSpace, iso: Isometry, u, probes, h_fd: float = 1e-3) -> float:
    """Max over probes of ``|(Lu)(Phi x) - L(u o Phi)(x)|`` by central differences.

    ``u`` must be vectorised over a trailing coordinate axis.  The residual is
    O(h_fd^2) whenever ``L`` commutes with ``Phi``.
    """
    probes = space.check(np.atleast_2d(probes))
    images = space.check(iso.apply(probes))
    lhs = apply_L_fd(space, u, images, h_fd)
    rhs = apply_L_fd(space, lambda y: u(iso.apply(y)), probes, h_fd)
    return float(np.max(np.abs(lhs - rhs)))


def pullback_field(iso: Isometry, field, target_grid=None):
    """Sample ``field o iso`` on the nodes of ``target_grid`` (default: the
    field's own grid), interpolating the source field at the image points."""
    from .pde import GridField

    grid = field.grid if target_grid is None else target_grid
    images = iso.apply(grid.points)
    inside = field.grid.contains(images)
    if not np.all(inside):
        bad = grid.points[~inside]
        raise CoverageError(
            f"{len(bad)} target nodes map outside the source domain, e.g. {bad[0].tolist()}",
            offending=bad,
        )
    values = field.interpolate(images)
    return GridField(grid, values, field.boundary_value)
