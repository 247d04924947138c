"""Spherical means and first moments of solutions and the balance laws they obey.

After moving the centre to the origin, the mean ``U(t, r)`` and the first
moment ``Q(t, r)`` of ``v`` are integrals over the unit sphere of
``v(t, r theta)`` and ``theta v(t, r theta)`` with ``r`` the coordinate radius.
Averaging ``v_t = L v`` in polar coordinates gives

    4 r U_t   = (1 + k r^2)^2 (r U_rr + (n - 1) U_r),
    4 r^2 Q_t = (1 + k r^2)^2 (r^2 Q_rr + (n - 1) r Q_r - (n - 1) Q),

which :func:`ode_residual_U` and :func:`ode_residual_Q` check.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .asympt import sphere_nodes
from .domain import dist_to_boundary
from .errors import ArgumentError, CoverageError, PreconditionError
from .modelspace import ModelSpace, coordinate_radius, h_k
from .moebius import Isometry, compose, from_origin, rotation, to_origin

__all__ = [
    "MeanSeries",
    "IsometryDifference",
    "isometry_pair",
    "mean_series",
    "ode_residual_U",
    "ode_residual_Q",
    "BalanceReport",
    "balance_law_check",
    "sphere_area",
]


def sphere_area(n: int) -> float:
    """Area of the unit sphere ``S^{n-1}``."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(eq=False)
class MeanSeries:
    """Spherical means ``U[i, j]`` and moments ``Q[i, j, :]`` at ``times[i]``
    and geodesic radius ``radii[j]`` about ``center``."""

    space: ModelSpace
    center: np.ndarray
    radii: np.ndarray
    coord_radii: np.ndarray
    times: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        T, R = len(self.times), len(self.radii)
        if self.U.shape != (T, R) or self.Q.shape != (T, R, self.space.n):
            raise ArgumentError("U must be (times, radii) and Q (times, radii, n)")
        if not np.all(np.isfinite(self.U)) or not np.all(np.isfinite(self.Q)):
            raise ArgumentError("spherical means must be finite")

    def to_csv(self, path=None) -> str:
        """Rows ``t, r, U, Q_1..Q_n`` (``r`` geodesic), full precision."""
        n = self.space.n
        buf = io.StringIO()
        header = {"k": self.space.k, "n": n, "center": self.center.tolist(), **self.meta}
        buf.write("# " + json.dumps(header, sort_keys=True, default=str) + "\n")
        buf.write(",".join(["t", "r", "U"] + [f"Q_{i + 1}" for i in range(n)]) + "\n")
        for i, t in enumerate(self.times):
            for j, r in enumerate(self.radii):
                row = [t, r, self.U[i, j], *self.Q[i, j]]
                buf.write(",".join(repr(float(v)) for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "MeanSeries":
        with open(path) as fh:
            first = fh.readline()
            header = json.loads(first[1:]) if first.startswith("#") else {}
            data = np.loadtxt(fh, delimiter=",", skiprows=0 if not first.startswith("#") else 1, ndmin=2)
        space = ModelSpace(header["k"], header["n"])
        times = np.unique(data[:, 0])
        radii = np.unique(data[:, 1])
        U = data[:, 2].reshape(len(times), len(radii))
        Q = data[:, 3:].reshape(len(times), len(radii), space.n)
        meta = {k: v for k, v in header.items() if k not in ("k", "n", "center")}
        return cls(space, np.asarray(header["center"], float), radii,
                   np.asarray(coordinate_radius(space, radii)), times, U, Q, meta)


class IsometryDifference:
    """The field ``v(t, x) = u(t, Phi1 x) - u(t, Phi2 x)`` of a heat trace ``u``.

    It solves the same heat equation wherever both images lie in the domain.
    """

    def __init__(self, trace, phi1: Isometry, phi2: Isometry):
        self.trace = trace
        self.phi1 = phi1
        self.phi2 = phi2
        self.times = trace.times

    @property
    def space(self):
        return self.phi1.space

    def evaluate(self, t: float, points) -> np.ndarray:
        f = self.trace.field_at(t)
        return f.interpolate(self.phi1.apply(points), log=False) - f.interpolate(self.phi2.apply(points), log=False)

    def reach(self, center) -> float:
        """Largest radius about ``center`` on which ``v`` is defined."""
        dom = self.trace.grid.domain
        return float(min(dist_to_boundary(dom, self.phi1.apply(center)),
                         dist_to_boundary(dom, self.phi2.apply(center))))

    def sup(self, t: float) -> float:
        return float(np.abs(self.trace.field_at(t).values).max())


class _TraceSource:
    def __init__(self, trace):
        self.trace = trace
        self.times = trace.times
        self.space = trace.grid.space

    def evaluate(self, t, points):
        return self.trace.field_at(t).interpolate(points, log=False)

    def reach(self, center):
        return float(dist_to_boundary(self.trace.grid.domain, center))

    def sup(self, t):
        return float(np.abs(self.trace.field_at(t).values).max())


def _source(obj):
    if hasattr(obj, "evaluate") and hasattr(obj, "reach"):
        return obj
    if hasattr(obj, "field_at") and hasattr(obj, "grid"):
        return _TraceSource(obj)
    raise ArgumentError("expected a HeatTrace or an object with evaluate/reach/times")


def _point_reflection(space: ModelSpace, c) -> Isometry:
    """The isometry ``x -> -x`` conjugated to fix ``c``."""
    minus = rotation(space, -np.eye(space.n))
    if np.linalg.norm(c) == 0:
        return minus
    return compose(from_origin(space, c), compose(minus, to_origin(space, c)))


def isometry_pair(space: ModelSpace, center, radius: float, direction=None, mode: str = "antipodal"):
    """Two isometries placing the origin on a sphere about ``center``.

    ``Phi1`` sends the origin to the point at geodesic distance ``radius`` from
    ``center`` along ``direction`` (default the first axis).  In ``antipodal``
    mode ``Phi2`` is ``Phi1`` followed by the point reflection through
    ``center``, so ``Phi2(0)`` is the antipodal point; in ``reflected`` mode
    ``Phi2`` is ``Phi1`` preceded by the reflection in the hyperplane normal
    to the first axis, so both send the origin to the same point.
    """
    n = space.n
    c = space.check(np.asarray(center, dtype=float).reshape(n))
    u = np.eye(n)[0] if direction is None else np.asarray(direction, dtype=float).reshape(n)
    u = u / np.linalg.norm(u)
    y = float(coordinate_radius(space, radius)) * u
    to_c = from_origin(space, c)
    phi1 = compose(to_c, from_origin(space, y))
    if mode == "antipodal":
        phi2 = compose(_point_reflection(space, c), phi1)
    elif mode == "reflected":
        ref = np.eye(n)
        ref[0, 0] = -1.0
        phi2 = compose(phi1, rotation(space, ref))
    else:
        raise ArgumentError("mode must be 'antipodal' or 'reflected'")
    return phi1, phi2


def mean_series(source, center, radii, times=None, m: int = 128) -> MeanSeries:
    """Spherical means and first moments of a trace about ``center``.

    Parameters
    ----------
    source : HeatTrace or IsometryDifference
        Anything with ``times``, ``evaluate(t, points)`` and ``reach(center)``.
    center : array_like
        Centre of the geodesic spheres.
    radii : array_like
        Geodesic radii, each below the distance from ``center`` to the
        boundary (CoverageError otherwise).
    times : array_like, optional
        Snapshot times to use (default all stored snapshots).
    m : int
        Angular quadrature size per sphere.
    """
    src = _source(source)
    space = src.space
    n = space.n
    c = space.check(np.asarray(center, dtype=float).reshape(n))
    radii = np.asarray(radii, dtype=float).ravel()
    if np.any(radii <= 0):
        raise ArgumentError("radii must be positive")
    d_star = src.reach(c)
    if radii.max() >= d_star:
        raise CoverageError(
            f"radius {radii.max():.6g} reaches the boundary (distance {d_star:.6g})",
            offending=radii[radii >= d_star],
        )
    times = np.asarray(src.times if times is None else times, dtype=float).ravel()
    t_coord = np.asarray(coordinate_radius(space, radii), dtype=float)
    back = from_origin(space, c) if np.linalg.norm(c) > 0 else None
    # Unit-sphere nodes and weights (dTheta) reused for every radius.
    y1, w1 = sphere_nodes(space, np.zeros(n), float(radii[0]), m)
    theta = y1 / np.linalg.norm(y1, axis=1, keepdims=True)
    w = w1 / float(h_k(space, radii[0])) ** (n - 1)
    pts = []
    for t in t_coord:
        y = t * theta
        pts.append(back.apply(y) if back is not None else y)
    pts = np.concatenate(pts)
    U = np.empty((len(times), len(radii)))
    Q = np.empty((len(times), len(radii), n))
    for i, t in enumerate(times):
        vals = np.asarray(src.evaluate(t, pts)).reshape(len(radii), -1)
        U[i] = vals @ w
        Q[i] = np.einsum("jq,q,qd->jd", vals, w, theta)
    return MeanSeries(space, c, radii, t_coord, times, U, Q, {"quadrature_nodes": len(w)})


def _fd_weights(x, x0, order):
    """Finite-difference weights for the ``order``-th derivative at ``x0``."""
    x = np.asarray(x, dtype=float) - x0
    p = len(x)
    V = np.vander(x, p, increasing=True).T
    rhs = np.zeros(p)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def _derivatives(series: MeanSeries, F):
    """Five-point derivatives ``F_t``, ``F_r``, ``F_rr`` on interior samples.

    ``F`` has shape (T, R, ...).  Returns arrays over ``[2:-2, 2:-2]``.
    """
    t = np.asarray(series.times, dtype=float)
    r = np.asarray(series.coord_radii, dtype=float)
    if len(t) < 5 or len(r) < 5:
        raise ArgumentError("stencil needs at least 5 samples in t and in r")
    if np.any(np.diff(t) <= 0) or np.any(np.diff(r) <= 0):
        raise ArgumentError("times and radii must be strictly increasing")
    ti, ri = range(2, len(t) - 2), range(2, len(r) - 2)
    # Weights sum to zero, so differencing against the centre sample is exact
    # algebra that makes constants differentiate to exactly zero.
    Ft = np.stack([np.tensordot(_fd_weights(t[i - 2:i + 3], t[i], 1), F[i - 2:i + 3, 2:-2] - F[i, 2:-2], axes=1)
                   for i in ti])
    Fr, Frr = [
        np.stack([np.tensordot(_fd_weights(r[j - 2:j + 3], r[j], order),
                               F[2:-2, j - 2:j + 3] - F[2:-2, j:j + 1], axes=(0, 1)) for j in ri], axis=1)
        for order in (1, 2)
    ]
    return Ft, Fr, Frr, r[2:-2]


def _shape(r, extra):
    return r.reshape((1, -1) + (1,) * extra)


def ode_residual_U(series: MeanSeries, normalize: float | None = None) -> float:
    """Max residual of the mean equation over interior samples.

    The residual of ``4 r U_t = (k^2 r^5 + 2k r^3 + r) U_rr + (n-1)(k^2 r^4 +
    2k r^2 + 1) U_r`` (``r`` the coordinate radius) is divided by
    ``normalize`` or, by default, by ``max |4 r U_t|`` (1 when that is at
    round-off level, i.e. the series is static).
    """
    k, n = series.space.k, series.space.n
    Ut, Ur, Urr, r = _derivatives(series, series.U)
    r = _shape(r, 0)
    lhs = 4 * r * Ut
    rhs = (k * k * r**5 + 2 * k * r**3 + r) * Urr + (n - 1) * (k * k * r**4 + 2 * k * r**2 + 1) * Ur
    return _normalized(lhs - rhs, lhs, normalize, _lhs_scale(series, series.U, 1))


def ode_residual_Q(series: MeanSeries, form: str = "derived", normalize: float | None = None) -> float:
    """Max componentwise residual of the moment equation.

    ``form="derived"`` uses the zeroth-order term ``-(n-1)(1+k r^2)^2 Q`` that
    follows from the polar form of the operator (linear coordinate functions
    are then exact static solutions); ``form="printed"`` uses ``-(n-1) Q``,
    which agrees only for k = 0.  Normalized like :func:`ode_residual_U`.
    """
    if form not in ("derived", "printed"):
        raise ArgumentError("form must be 'derived' or 'printed'")
    k, n = series.space.k, series.space.n
    Qt, Qr, Qrr, r = _derivatives(series, series.Q)
    r = _shape(r, 1)
    a = (1 + k * r * r) ** 2
    lhs = 4 * r * r * Qt
    zeroth = (n - 1) * (a if form == "derived" else 1.0) * series.Q[2:-2, 2:-2]
    rhs = a * r * r * Qrr + (n - 1) * a * r * Qr - zeroth
    return _normalized(lhs - rhs, lhs, normalize, _lhs_scale(series, series.Q, 2))


def _lhs_scale(series, F, power):
    # Size of 4 r^power F_t if F changed by its own magnitude over the time span.
    span = float(series.times[-1] - series.times[0])
    return 4 * float(np.max(series.coord_radii)) ** power * float(np.abs(F).max()) / span


def _normalized(res, lhs, normalize, scale):
    if normalize is None:
        normalize = float(np.abs(lhs).max())
        # A time derivative at round-off level means a static series: report the raw residual.
        if normalize <= 1e-10 * scale:
            normalize = 1.0
    return float(np.abs(res).max() / normalize)


@dataclass
class BalanceReport:
    """Outcome of one direction of a balance law.

    ``center_sup`` is ``max_t |v(t, c)|`` (or the metric gradient norm times
    the radius reach, for the moment law) and ``means_sup`` the largest
    normalized sphere mean (or moment), both divided by ``scale``.
    """

    direction: str
    moment: bool
    center_sup: float
    means_sup: float
    scale: float
    tol_c: float
    tol_m: float
    hypothesis_holds: bool
    conclusion_holds: bool
    status: str
    residual: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _center_gradient(src, t, c, reach):
    """Metric gradient norm of ``v(t, .)`` at ``c`` by central differences."""
    space = src.space
    n = space.n
    step = 1e-3 * reach
    h = float(coordinate_radius(space, step))
    back = from_origin(space, c) if np.linalg.norm(c) > 0 else None
    e = np.vstack([h * np.eye(n), -h * np.eye(n)])
    pts = back.apply(e) if back is not None else e
    vals = np.asarray(src.evaluate(t, pts))
    g = (vals[:n] - vals[n:]) / (2 * h)
    # At the origin of the recentred chart the conformal factor is 2.
    return float(np.linalg.norm(g) / 2.0)


def balance_law_check(
    source,
    center,
    radii,
    times=None,
    direction: str = "center->means",
    moment: bool = False,
    tol_c: float = 5e-3,
    tol_m: float = 5e-3,
    scale: float | None = None,
    residual_tol: float | None = 0.1,
    m: int = 128,
) -> BalanceReport:
    """Check one direction of the mean-value (or moment) balance law.

    ``direction="center->means"``: if ``max_t |v(t, c)| / scale < tol_c`` then
    every normalized sphere mean must be below ``tol_m``;
    ``"means->center"`` is the converse.  With ``moment=True`` the centre
    quantity is the metric gradient (times the reach) and the sphere quantity
    the first moment.  Status is ``not-applicable`` when the hypothesis of the
    chosen direction fails.

    ``scale`` defaults to the largest ``|u|`` of the underlying trace, so that
    an identically vanishing ``v`` passes instead of being divided by zero.
    When ``residual_tol`` is set and the sphere quantities exceed ``tol_m``,
    the moment (or mean) equation residual must stay below it, otherwise
    ``v`` is not a solution and PreconditionError is raised.
    """
    if direction not in ("center->means", "means->center"):
        raise ArgumentError("direction must be 'center->means' or 'means->center'")
    src = _source(source)
    space = src.space
    c = space.check(np.asarray(center, dtype=float).reshape(space.n))
    series = mean_series(src, c, radii, times, m=m)
    if scale is None:
        scale = max(src.sup(t) for t in series.times)
    if not scale > 0:
        raise ArgumentError("scale must be positive")
    area = sphere_area(space.n)
    reach = src.reach(c)
    if moment:
        center_sup = max(_center_gradient(src, t, c, reach) for t in series.times) * reach / scale
        means_sup = float(np.linalg.norm(series.Q, axis=-1).max() / (area * scale))
    else:
        vc = np.array([np.asarray(src.evaluate(t, c[None, :]))[0] for t in series.times])
        center_sup = float(np.abs(vc).max() / scale)
        means_sup = float(np.abs(series.U).max() / (area * scale))
    residual = None
    meta = {"d_star": reach}
    if residual_tol is not None and len(series.times) >= 5 and len(series.radii) >= 5:
        if means_sup >= tol_m:
            residual = ode_residual_Q(series) if moment else ode_residual_U(series)
            if residual > residual_tol:
                raise PreconditionError(
                    f"v does not behave like a solution: radial equation residual {residual:.3g} > {residual_tol:.3g}"
                )
        else:
            # Sphere quantities at noise level carry no derivative information.
            meta["residual"] = "skipped: sphere quantities below tol_m"
    if direction == "center->means":
        hyp, concl = center_sup < tol_c, means_sup < tol_m
    else:
        hyp, concl = means_sup < tol_m, center_sup < tol_c
    status = "not-applicable" if not hyp else ("pass" if concl else "fail")
    return BalanceReport(direction, moment, center_sup, means_sup, float(scale), tol_c, tol_m,
                         bool(hyp), bool(concl), status, residual, meta)
