"""Implicit domains, boundary samplers and the distance to the boundary.

A domain is ``{phi < 0}`` for a smooth ``phi`` of the conformal coordinates.
All samplers parametrise the boundary by rays from ``domain.center``, so the
domains handled here must be star-shaped with respect to that point (true
for every fixture produced by :func:`standard_shapes`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import ArgumentError, DomainError, EmptyLevelSetError, SingularityError
from .modelspace import (
    ModelSpace,
    _radial_distance_raw,
    coordinate_radius,
    distance_closed_form,
)
from .moebius import _mobius

_BISECT_ITERS = 80


@dataclass(frozen=True, eq=False)
class ImplicitDomain:
    """Domain ``{phi < 0}`` of a model space.

    ``phi``, ``grad`` and ``hess`` are vectorised over a trailing coordinate
    axis.  ``bbox`` is an ``(n, 2)`` array of coordinate bounds enclosing
    ``{phi <= 0}``.  ``exact_distance``, when present, is a closed form for
    the distance to the boundary (used instead of sample-and-polish).
    """

    space: ModelSpace
    phi: Callable
    bbox: np.ndarray
    grad: Callable | None = None
    hess: Callable | None = None
    center: np.ndarray | None = None
    exact_distance: Callable | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = self.space.n
        bbox = np.asarray(self.bbox, dtype=float).reshape(n, 2)
        if np.any(bbox[:, 1] <= bbox[:, 0]):
            raise ArgumentError("bounding box must have lo < hi on every axis")
        object.__setattr__(self, "bbox", bbox)
        c = bbox.mean(axis=1) if self.center is None else np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", c.reshape(n))

    def __call__(self, x) -> np.ndarray:
        return self.phi(np.asarray(x, dtype=float))

    def contains(self, x, closed: bool = False) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            v = self.phi(np.asarray(x, dtype=float))
        return v <= 0 if closed else v < 0

    def gradient(self, x) -> np.ndarray:
        """Euclidean gradient of ``phi``: analytic if available, else central differences."""
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        h = 1e-6 * max(1.0, float(np.abs(self.bbox).max()))
        out = np.empty(x.shape)
        for i in range(self.space.n):
            e = np.zeros(self.space.n)
            e[i] = h
            out[..., i] = (self.phi(x + e) - self.phi(x - e)) / (2 * h)
        return out

    def validate(self, resolution: int = 41, boundary_samples: int = 64) -> "ImplicitDomain":
        """Check the documented invariants by sampling; raise DomainError on failure."""
        n = self.space.n
        axes = [np.linspace(lo, hi, resolution) for lo, hi in self.bbox]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = self.phi(pts)
        inside = vals <= 0
        if np.any(inside & ~self.space.is_admissible(pts)):
            raise DomainError(f"domain {self.name!r} leaves the admissible region of k={self.space.k}")
        on_box = np.zeros(len(pts), dtype=bool)
        for i, (lo, hi) in enumerate(self.bbox):
            on_box |= np.isclose(pts[:, i], lo) | np.isclose(pts[:, i], hi)
        if np.any(inside & on_box):
            raise DomainError(f"bounding box does not enclose domain {self.name!r}")
        if not float(self.phi(self.center)) < 0:
            raise DomainError(f"reference centre {self.center.tolist()} is not interior")
        sample = sample_boundary(self, boundary_samples)
        g = np.linalg.norm(self.gradient(sample.points), axis=-1)
        if np.any(g <= 1e-10):
            raise SingularityError(f"|grad phi| vanishes on the boundary of {self.name!r}")
        return self


@dataclass(frozen=True, eq=False)
class BoundarySample:
    """Points on a hypersurface with inward metric-unit normals and area weights.

    ``normals`` are coordinate vectors of metric length one (Euclidean
    length ``1/conformal_factor``).  ``weights`` integrate against the metric
    surface measure.  ``parameters`` are the ray angles that produced the
    points (``(m,)`` for n = 2, ``(m, 2)`` polar/azimuth for n = 3).
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    parameters: np.ndarray

    def __len__(self):
        return len(self.points)

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))


# ---------------------------------------------------------------- shapes --


def _radial_parts(k):
    """``R(t)``, ``R'(t)``, ``R''(t)`` for the radial distance function."""

    def R(t):
        return _radial_distance_raw(k, t)

    def dR(t):
        return 2.0 / (1.0 + k * t * t)

    def ddR(t):
        return -4.0 * k * t / (1.0 + k * t * t) ** 2

    return R, dR, ddR


def _signed_radial(space, s):
    return np.sign(s) * _radial_distance_raw(space.k, abs(s))


def _signed_coordinate(space, r):
    return math.copysign(float(coordinate_radius(space, abs(r))), r)


def _geodesic_ball_as_euclidean(space, c, r):
    """Euclidean centre and radius of the geodesic ball ``B(c, r)``."""
    tc = np.linalg.norm(c)
    u = c / tc if tc > 0 else np.eye(space.n)[0]
    rc = _radial_distance_raw(space.k, tc)
    lo, hi = rc - r, rc + r
    if space.k > 0 and max(abs(lo), abs(hi)) > space.max_radius * (1 + 1e-12):
        raise DomainError(f"geodesic ball of radius {r} about {c.tolist()} leaves the hemisphere")
    if space.k < 0 and not (np.isfinite(lo) and np.isfinite(hi)):
        raise DomainError("geodesic ball must have finite centre and radius")
    p_hi, p_lo = _signed_coordinate(space, hi), _signed_coordinate(space, lo)
    return 0.5 * (p_hi + p_lo) * u, 0.5 * (p_hi - p_lo)


def _euclidean_ball_as_geodesic(space, c, a):
    """Geodesic centre and radius of the coordinate ball ``|x - c| < a``."""
    tc = np.linalg.norm(c)
    u = c / tc if tc > 0 else np.eye(space.n)[0]
    if not space.is_admissible(c + a * u) or not space.is_admissible(c - a * u):
        raise DomainError(f"coordinate ball |x - {c.tolist()}| < {a} leaves the admissible region")
    r_hi = _signed_radial(space, tc + a)
    r_lo = _signed_radial(space, tc - a)
    rc = 0.5 * (r_hi + r_lo)
    return _signed_coordinate(space, rc) * u, 0.5 * (r_hi - r_lo)


def _euclidean_ball(space, c, a, geo_center, geo_radius, name, params):
    n = space.n

    def phi(x):
        d = x - c
        return (np.sum(d * d, axis=-1) - a * a) / (2 * a)

    def grad(x):
        return (x - c) / a

    def hess(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(n) / a, x.shape[:-1] + (n, n)).copy()

    def exact(x):
        return geo_radius - distance_closed_form(space, x, geo_center)

    bbox = np.stack([c - 1.05 * a, c + 1.05 * a], axis=1)
    if space.k != 0:
        bbox = np.clip(bbox, -space.rho, space.rho)
    return ImplicitDomain(space, phi, bbox, grad, hess, c, exact, name, params)


def _geodesic_ball_at_origin(space, r, params):
    R, dR, ddR = _radial_parts(space.k)
    t_r = float(coordinate_radius(space, r))

    def phi(x):
        t = np.linalg.norm(x, axis=-1)
        if space.k != 0:
            t = np.where(space.is_admissible(x) | (space.k > 0), t, np.nan)
        with np.errstate(invalid="ignore"):
            return R(t) - r

    def grad(x):
        x = np.asarray(x, dtype=float)
        t = np.linalg.norm(x, axis=-1)[..., None]
        return dR(t) * x / np.where(t > 0, t, 1.0)

    def hess(x):
        x = np.asarray(x, dtype=float)
        t = np.linalg.norm(x, axis=-1)[..., None, None]
        tt = np.where(t > 0, t, 1.0)
        xx = x[..., :, None] * x[..., None, :] / tt**2
        eye = np.eye(space.n)
        return ddR(t) * xx + dR(t) / tt * (eye - xx)

    def exact(x):
        return r - _radial_distance_raw(space.k, np.linalg.norm(x, axis=-1))

    bbox = np.tile([-1.05 * t_r, 1.05 * t_r], (space.n, 1))
    if space.k != 0:
        bbox = np.clip(bbox, -space.rho, space.rho)
    return ImplicitDomain(space, phi, bbox, grad, hess, np.zeros(space.n), exact, "geodesic-ball", params)


def _ellipse(space, axes, c, params):
    axes = np.asarray(axes, dtype=float)
    inv2 = 1.0 / axes**2
    n = space.n

    def phi(x):
        d = x - c
        return np.sum(d * d * inv2, axis=-1) - 1.0

    def grad(x):
        return 2.0 * (x - c) * inv2

    def hess(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.diag(2.0 * inv2), x.shape[:-1] + (n, n)).copy()

    reach = np.linalg.norm(c) + axes.max()
    if space.k != 0 and not space.is_admissible(np.r_[reach, np.zeros(n - 1)]):
        raise DomainError(f"ellipse with axes {axes.tolist()} leaves the admissible region of k={space.k}")
    bbox = np.stack([c - 1.05 * axes, c + 1.05 * axes], axis=1)
    return ImplicitDomain(space, phi, bbox, grad, hess, c, None, "ellipse", params)


def _perturbed_ball(space, r0, eps, m, c, params):
    if space.n != 2:
        raise ArgumentError("perturbed-ball is defined for n = 2 only")
    if not 0 <= abs(eps) < 1:
        raise ArgumentError("perturbation amplitude must satisfy |eps| < 1")
    rmax = r0 * (1 + abs(eps))
    if space.k != 0 and not space.is_admissible(np.array([np.linalg.norm(c) + rmax, 0.0])):
        raise DomainError(f"perturbed ball of max radius {rmax} leaves the admissible region of k={space.k}")

    def polar(x):
        d = np.asarray(x, dtype=float) - c
        return d, np.linalg.norm(d, axis=-1), np.arctan2(d[..., 1], d[..., 0])

    def phi(x):
        _, t, th = polar(x)
        return t - r0 * (1 + eps * np.cos(m * th))

    def grad(x):
        d, t, th = polar(x)
        t = np.where(t > 0, t, 1.0)[..., None]
        g1 = r0 * eps * m * np.sin(m * th)[..., None]  # dphi/dtheta
        dth = np.stack([-d[..., 1], d[..., 0]], axis=-1) / t**2
        return d / t + g1 * dth

    def hess(x):
        d, t, th = polar(x)
        t = np.where(t > 0, t, 1.0)[..., None, None]
        x1, x2 = d[..., 0, None, None], d[..., 1, None, None]
        eye = np.eye(2)
        dd = d[..., :, None] * d[..., None, :]
        h_norm = (eye - dd / t**2) / t
        dth = np.stack([-d[..., 1], d[..., 0]], axis=-1) / t[..., 0] ** 2
        h_th = np.concatenate(
            [
                np.concatenate([2 * x1 * x2, x2**2 - x1**2], axis=-1),
                np.concatenate([x2**2 - x1**2, -2 * x1 * x2], axis=-1),
            ],
            axis=-2,
        ) / t**4
        g1 = r0 * eps * m * np.sin(m * th)[..., None, None]
        g2 = r0 * eps * m * m * np.cos(m * th)[..., None, None]
        # Hess phi = Hess|d| + phi_thth dth dth^T + phi_th Hess theta
        return h_norm + g2 * dth[..., :, None] * dth[..., None, :] + g1 * h_th

    bbox = np.stack([c - 1.05 * rmax, c + 1.05 * rmax], axis=1)
    return ImplicitDomain(space, phi, bbox, grad, hess, c, None, "perturbed-ball", params)


SHAPES = ("geodesic-ball", "coordinate-ball", "ellipse", "perturbed-ball")


def standard_shapes(space: ModelSpace, name: str, params: dict | None = None) -> ImplicitDomain:
    """Fixture factory for the domains used throughout the package.

    Parameters
    ----------
    space : ModelSpace
    name : str
        ``"geodesic-ball"`` (``radius`` in metric units, optional ``center``),
        ``"coordinate-ball"`` (coordinate ``radius``, optional ``center``),
        ``"ellipse"`` (coordinate semi-axes ``a``, ``b`` and for n = 3 ``c``,
        optional ``center``) or ``"perturbed-ball"`` (n = 2; boundary
        ``r(theta) = r0 (1 + eps cos(m theta))`` about ``center``).
    params : dict
    """
    params = dict(params or {})
    n = space.n
    c = np.asarray(params.get("center", np.zeros(n)), dtype=float).reshape(n)
    space.check(c)
    if name == "geodesic-ball":
        r = float(params["radius"])
        if not r > 0:
            raise ArgumentError("radius must be positive")
        if space.k > 0 and np.linalg.norm(c) == 0 and r > space.max_radius * (1 + 1e-12):
            raise DomainError(f"geodesic ball of radius {r} leaves the hemisphere (max {space.max_radius})")
        if np.linalg.norm(c) == 0:
            dom = _geodesic_ball_at_origin(space, r, params)
        else:
            ce, a = _geodesic_ball_as_euclidean(space, c, r)
            dom = _euclidean_ball(space, ce, a, c, r, name, params)
    elif name == "coordinate-ball":
        a = float(params["radius"])
        if not a > 0:
            raise ArgumentError("radius must be positive")
        gc, gr = _euclidean_ball_as_geodesic(space, c, a)
        dom = _euclidean_ball(space, c, a, gc, gr, name, params)
    elif name == "ellipse":
        keys = ["a", "b", "c"][:n]
        missing = [key for key in keys if key not in params]
        if missing:
            raise ArgumentError(f"ellipse needs semi-axes {keys}, missing {missing}")
        axes = [float(params[key]) for key in keys]
        if min(axes) <= 0:
            raise ArgumentError("semi-axes must be positive")
        dom = _ellipse(space, axes, c, params)
    elif name == "perturbed-ball":
        dom = _perturbed_ball(space, float(params["r0"]), float(params.get("eps", 0.0)), int(params.get("m", 3)), c, params)
    else:
        raise ArgumentError(f"unknown shape {name!r}; expected one of {SHAPES}")
    return dom.validate()


# -------------------------------------------------------------- sampling --


def _directions(n, params):
    """Unit directions and their parameter derivatives."""
    if n == 2:
        th = params
        u = np.stack([np.cos(th), np.sin(th)], axis=-1)
        return u, [np.stack([-np.sin(th), np.cos(th)], axis=-1)]
    th, ph = params[..., 0], params[..., 1]
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    u = np.stack([st * cp, st * sp, ct], axis=-1)
    u_th = np.stack([ct * cp, ct * sp, -st], axis=-1)
    u_ph = np.stack([-st * sp, st * cp, np.zeros_like(st)], axis=-1)
    return u, [u_th, u_ph]


def _ray_extent(domain):
    corners = np.stack(np.meshgrid(*domain.bbox, indexing="ij"), axis=-1).reshape(-1, domain.space.n)
    return float(np.linalg.norm(corners - domain.center, axis=-1).max())


def ray_boundary(domain: ImplicitDomain, u) -> np.ndarray:
    """Coordinate length along each unit ray ``center + t u`` to ``{phi = 0}``.

    Vectorised bisection to machine precision; assumes the domain is
    star-shaped about ``domain.center``.
    """
    u = np.asarray(u, dtype=float)
    c = domain.center
    lo = np.zeros(u.shape[:-1])
    hi = np.full(u.shape[:-1], _ray_extent(domain))
    with np.errstate(invalid="ignore", divide="ignore"):
        f_hi = domain.phi(c + hi[..., None] * u)
    f_hi = np.where(np.isnan(f_hi), 1.0, f_hi)
    if np.any(f_hi <= 0):
        raise DomainError("boundary not found inside the bounding box along some ray")
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        with np.errstate(invalid="ignore", divide="ignore"):
            f = domain.phi(c + mid[..., None] * u)
        neg = f < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(hi, 1e-300)):
            break
    # One secant polish between the final brackets.
    f_lo = domain.phi(c + lo[..., None] * u)
    f_hi = domain.phi(c + hi[..., None] * u)
    denom = f_hi - f_lo
    t = np.where(denom != 0, lo - f_lo * (hi - lo) / np.where(denom != 0, denom, 1.0), 0.5 * (lo + hi))
    return np.clip(t, lo, hi)


def _param_grid(n, m):
    if n == 2:
        return 2 * np.pi * np.arange(m) / m, None
    n_th = max(2, int(round(math.sqrt(m / 2))))
    n_ph = max(3, int(math.ceil(m / n_th)))
    mu, w_mu = np.polynomial.legendre.leggauss(n_th)
    th = np.arccos(mu)
    ph = 2 * np.pi * np.arange(n_ph) / n_ph
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    W = np.outer(w_mu, np.full(n_ph, 2 * np.pi / n_ph))
    params = np.stack([TH.ravel(), PH.ravel()], axis=-1)
    return params, W.ravel()


def _inward_normals(domain, points):
    g = domain.gradient(points)
    lam = 2.0 / (1.0 + domain.space.k * np.sum(points * points, axis=-1))
    return -g / (np.linalg.norm(g, axis=-1) * lam)[..., None]


def sample_boundary(domain: ImplicitDomain, m: int) -> BoundarySample:
    """``m`` boundary points (approximately ``m`` for n = 3) with quadrature weights.

    For n = 2 the rays are equally spaced in angle (trapezoidal rule,
    spectrally accurate for smooth boundaries).  For n = 3 the polar angle
    uses Gauss-Legendre nodes in its cosine and the azimuth is uniform.
    """
    if m < 3:
        raise ArgumentError("need at least 3 boundary samples")
    n = domain.space.n
    key = ("boundary", m)
    if key in domain._cache:
        return domain._cache[key]
    params, w_base = _param_grid(n, m)
    u, du = _directions(n, params)
    t = ray_boundary(domain, u)
    pts = domain.center + t[..., None] * u
    g = domain.gradient(pts)
    gu = np.sum(g * u, axis=-1)
    # Implicit differentiation of phi(c + t(p) u(p)) = 0.
    dt = [-t * np.sum(g * d, axis=-1) / gu for d in du]
    tangents = [dti[..., None] * u + t[..., None] * d for dti, d in zip(dt, du)]
    lam = 2.0 / (1.0 + domain.space.k * np.sum(pts * pts, axis=-1))
    if n == 2:
        jac = np.linalg.norm(tangents[0], axis=-1)
        weights = lam * jac * (2 * np.pi / m)
    else:
        # d(mu) = sin(theta) d(theta); the Gauss weights are in mu.
        cross = np.cross(tangents[0], tangents[1])
        jac = np.linalg.norm(cross, axis=-1) / np.sin(params[:, 0])
        weights = lam**2 * jac * w_base
    sample = BoundarySample(pts, _inward_normals(domain, pts), weights, params)
    domain._cache[key] = sample
    return sample


def _boundary_point(domain, p, t_guess=None):
    """Single boundary point on the ray with parameter ``p`` (scalar root-find)."""
    u, _ = _directions(domain.space.n, np.asarray(p, dtype=float)[None])
    u = u[0]
    c = domain.center

    def f(t):
        return float(domain.phi(c + t * u))

    lo, hi = 0.0, _ray_extent(domain)
    if t_guess is not None:
        a, b = 0.8 * t_guess, 1.25 * t_guess
        if f(a) < 0 < f(b):
            lo, hi = a, b
    t = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
    return (c + t * u)[None]


# -------------------------------------------------------------- distance --


def _polish(domain, x, p0, step, t_guess):
    space = domain.space
    n = space.n

    def f(p):
        q = _boundary_point(domain, p if n == 3 else np.atleast_1d(p)[0], t_guess)
        return float(distance_closed_form(space, x, q[0]))

    if n == 2:
        res = optimize.minimize_scalar(
            f, bounds=(p0 - step, p0 + step), method="bounded", options={"xatol": 1e-12}
        )
        return float(res.fun)
    res = optimize.minimize(
        f, p0, method="Nelder-Mead", options={"xatol": 1e-11, "fatol": 1e-15, "initial_simplex": None}
    )
    return float(res.fun)


def _t(sample, domain, j):
    return float(np.linalg.norm(sample.points[j] - domain.center))


def _distance_unsigned(domain, x, m_dense):
    sample = sample_boundary(domain, m_dense)
    d = distance_closed_form(domain.space, x, sample.points)
    if domain.space.n == 2:
        step = 2 * np.pi / m_dense * 1.5
        order = np.argsort(d)
        # Polish the best sample and any distinct local minimum close to it.
        best = float(d[order[0]])
        cand = [order[0]]
        for j in order[1:8]:
            if min(abs((sample.parameters[j] - sample.parameters[i] + np.pi) % (2 * np.pi) - np.pi) for i in cand) > 2 * step:
                if d[j] < best * 1.05 + 1e-12:
                    cand.append(j)
        return min(min(best, _polish(domain, x, sample.parameters[j], step, _t(sample, domain, j))) for j in cand)
    j = int(np.argmin(d))
    return min(float(d[j]), _polish(domain, x, sample.parameters[j], None, _t(sample, domain, j)))


def dist_to_boundary(domain: ImplicitDomain, x, m_dense: int = 720) -> np.ndarray:
    """Geodesic distance from ``x`` (in the closed domain) to the boundary.

    Exact for balls; otherwise the minimum over a dense boundary sample is
    polished by a local minimisation over the ray parametrisation.
    """
    space = domain.space
    x = space.check(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.asarray(domain.phi(x))
    scale = max(1.0, float(np.abs(domain.bbox).max()))
    if np.any(~(vals <= 1e-10 * scale)):
        bad = x.reshape(-1, space.n)[~(vals.reshape(-1) <= 1e-10 * scale)][0]
        raise DomainError(f"point {bad.tolist()} lies outside the domain")
    return _distance_raw(domain, x, m_dense)


def _distance_raw(domain, x, m_dense):
    if domain.exact_distance is not None:
        return np.abs(np.asarray(domain.exact_distance(x), dtype=float))
    if domain.space.n == 3:
        m_dense = min(m_dense, 2000)
    if x.ndim == 1:
        return np.float64(_distance_unsigned(domain, x, m_dense))
    out = np.empty(x.shape[:-1])
    for idx in np.ndindex(out.shape):
        out[idx] = _distance_unsigned(domain, x[idx], m_dense)
    return out


def signed_distance(domain: ImplicitDomain, x, m_dense: int = 720) -> np.ndarray:
    """Distance to the boundary, negative inside and positive outside (same sign
    convention as ``phi``)."""
    x = domain.space.check(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        sign = np.where(np.asarray(domain.phi(x)) < 0, -1.0, 1.0)
    if domain.exact_distance is not None:
        return -np.asarray(domain.exact_distance(x), dtype=float)
    return sign * _distance_raw(domain, x, m_dense)


def inradius(domain: ImplicitDomain) -> float:
    """Maximum of the distance to the boundary over the domain."""
    key = ("inradius",)
    if key in domain._cache:
        return domain._cache[key]

    def neg(x):
        if not float(domain.phi(x)) < 0:
            return 0.0
        return -float(_distance_raw(domain, np.asarray(x), 360))

    res = optimize.minimize(neg, domain.center, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    best = np.asarray(res.x) if res.fun <= neg(domain.center) else domain.center
    domain.space.check(best)
    domain._cache[("inradius-point",)] = best
    domain._cache[key] = float(_distance_raw(domain, best, 720))
    return domain._cache[key]


def _normal_geodesic(space, q, normal, t):
    """Point at distance ``t`` along the geodesic leaving ``q`` with direction ``normal``."""
    w = normal / np.linalg.norm(normal, axis=-1, keepdims=True)
    t = np.asarray(t, dtype=float)
    if space.k > 0:
        # No hemisphere restriction here: the geodesic may pass through it.
        r = np.tan(math.sqrt(space.k) * t / 2) / math.sqrt(space.k)
    else:
        r = coordinate_radius(space, t)
    img = np.asarray(r)[..., None] * w
    if q.ndim == 1:
        return _mobius(space.k, -q, img)
    return np.stack([_mobius(space.k, -qi, yi[None])[0] for qi, yi in zip(q, img)])


class _PastCutLocus(Exception):
    pass


def parallel_surface(domain: ImplicitDomain, R: float, m: int) -> BoundarySample:
    """The inner parallel surface ``{dist_to_boundary = R}``.

    Boundary samples are pushed a distance ``R`` along their inward normal
    geodesics.  If some normal geodesic passes its cut point before ``R``
    (possible for non-convex domains) the surface is instead parametrised by
    rays from the maximiser of the distance and located by root-finding.
    """
    space = domain.space
    if not R > 0:
        raise ArgumentError("parallel distance must be positive")
    rin = inradius(domain)
    if R >= rin * (1 - 1e-9):
        raise EmptyLevelSetError(f"R={R} is not below the inradius {rin:.6g}")
    base = sample_boundary(domain, m)

    def by_normals(params):
        u, _ = _directions(space.n, params)
        t = ray_boundary(domain, u)
        q = domain.center + t[..., None] * u
        nrm = _inward_normals(domain, q)
        pts = _normal_geodesic(space, q, nrm, np.full(len(q), R))
        if np.any(_distance_raw(domain, pts, 720) < R - 1e-10 * max(1.0, R)):
            raise _PastCutLocus
        return pts

    def by_rays(params):
        u, _ = _directions(space.n, params)
        origin = domain._cache[("inradius-point",)]
        pts = np.empty(u.shape)
        for i, ui in enumerate(u):
            tb = ray_boundary(_recentred(domain, origin), ui[None])[0]

            def f(t):
                return float(_distance_raw(domain, origin + t * ui, 720)) - R

            pts[i] = origin + optimize.brentq(f, 0.0, tb, xtol=1e-14) * ui
        return pts

    try:
        surface = by_normals
        pts = surface(base.parameters)
        normals = _inward_normals_distance(domain, pts, base, R)
    except _PastCutLocus:
        surface = by_rays
        pts = surface(base.parameters)
        normals = _distance_gradient_normals(domain, pts)
    weights = _surface_weights(space, surface, base, pts, m)
    return BoundarySample(pts, normals, weights, base.parameters)


def _recentred(domain, origin):
    return ImplicitDomain(domain.space, domain.phi, domain.bbox, domain.grad, domain.hess, origin, domain.exact_distance, domain.name, domain.params)


def _distance_gradient_normals(domain, pts):
    space = domain.space
    h = 1e-6
    out = np.empty_like(pts)
    for i, p in enumerate(pts):
        g = np.empty(space.n)
        for j in range(space.n):
            e = np.zeros(space.n)
            e[j] = h
            g[j] = (float(_distance_raw(domain, p + e, 720)) - float(_distance_raw(domain, p - e, 720))) / (2 * h)
        lam = 2.0 / (1.0 + space.k * p.dot(p))
        out[i] = g / (np.linalg.norm(g) * lam)
    return out


def _inward_normals_distance(domain, pts, base, R):
    # The inward normal of a parallel surface continues the boundary normal
    # geodesic; its direction at distance R is the geodesic tangent.
    space = domain.space
    eps = 1e-6 * max(R, 1e-3)
    out = np.empty_like(pts)
    for i, q in enumerate(base.points):
        a = _normal_geodesic(space, q, base.normals[i], R - eps)
        b = _normal_geodesic(space, q, base.normals[i], R + eps)
        v = b - a
        lam = 2.0 / (1.0 + space.k * pts[i].dot(pts[i]))
        out[i] = v / (np.linalg.norm(v) * lam)
    return out


def _surface_weights(space, surface, base, pts, m):
    n = space.n
    count = len(pts)
    lam = 2.0 / (1.0 + space.k * np.sum(pts * pts, axis=-1))
    if n == 2:
        # Spectral derivative of the closed curve in the angle parameter.
        freq = np.fft.fftfreq(count, d=1.0 / count)
        if count % 2 == 0:
            freq[count // 2] = 0
        deriv = np.real(np.fft.ifft(1j * freq[:, None] * np.fft.fft(pts, axis=0), axis=0))
        return lam * np.linalg.norm(deriv, axis=-1) * (2 * np.pi / count)
    h = 1e-5
    params = base.parameters
    tangents = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        tangents.append((surface(params + e) - surface(params - e)) / (2 * h))
    jac = np.linalg.norm(np.cross(tangents[0], tangents[1]), axis=-1) / np.sin(params[:, 0])
    return lam**2 * jac * _param_grid(3, m)[1]
