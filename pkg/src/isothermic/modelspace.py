"""Constant-curvature model spaces in conformal (stereographic) coordinates.

Every point is a plain coordinate vector ``x`` in R^n and the metric is

    g = (2 / (1 + k|x|^2))^2 * |dx|^2,

for all signs of ``k``.  For ``k = 0`` this is *four times* the Euclidean
metric, so flat geodesic distances are twice coordinate distances.  Keeping
the factor makes every formula in the package uniform in ``k``.

For ``k > 0`` only the image of the closed southern hemisphere, ``|x| <= rho``,
is admissible; for ``k < 0`` the open ball ``|x| < rho``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DomainError, SingularityError

# Relative slack when testing |x| <= rho on the closed hemisphere.
_HEMI_TOL = 1e-12


@dataclass(frozen=True)
class ModelSpace:
    """The model M_k of sectional curvature ``k`` in dimension ``n``."""

    k: float
    n: int = 2

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ArgumentError(f"dimension must be an integer >= 2, got {self.n}")
        if not math.isfinite(self.k):
            raise ArgumentError(f"curvature must be finite, got {self.k}")

    @property
    def rho(self) -> float | None:
        """Curvature radius 1/sqrt|k|, or ``None`` for the flat model."""
        if self.k == 0:
            return None
        return 1.0 / math.sqrt(abs(self.k))

    @property
    def coordinate_bound(self) -> float:
        """Supremum of admissible coordinate norms (``inf`` when k = 0)."""
        return math.inf if self.k == 0 else self.rho

    @property
    def max_radius(self) -> float:
        """Largest geodesic radius about the origin inside the admissible region."""
        if self.k > 0:
            return math.pi * self.rho / 2
        return math.inf

    def is_admissible(self, x) -> np.ndarray:
        """Boolean mask of admissible points (last axis = coordinates)."""
        r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
        if self.k == 0:
            return np.isfinite(r2)
        rho2 = 1.0 / abs(self.k)
        if self.k < 0:
            return r2 < rho2
        return r2 <= rho2 * (1 + _HEMI_TOL)

    def check(self, x) -> np.ndarray:
        """Return ``x`` as a float array, raising DomainError if inadmissible."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ArgumentError(f"expected points with {self.n} coordinates, got shape {x.shape}")
        ok = self.is_admissible(x)
        if not np.all(ok):
            bad = x.reshape(-1, self.n)[~np.asarray(ok).reshape(-1)][0]
            raise DomainError(
                f"point {bad.tolist()} is outside the admissible region of M_k with k={self.k}"
                + (" (hemisphere |x| <= rho)" if self.k > 0 else "")
            )
        return x


@dataclass(frozen=True)
class CurvatureSpectrum:
    """Principal curvatures (sorted descending) of a hypersurface at ``point``."""

    point: np.ndarray
    values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        vals = np.sort(np.asarray(self.values, dtype=float))[::-1]
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))


def conformal_factor(space: ModelSpace, x) -> np.ndarray:
    """Line-element factor 2/(1 + k|x|^2); ``ds = factor * |dx|``."""
    x = space.check(x)
    return 2.0 / (1.0 + space.k * np.sum(x * x, axis=-1))


def _radial_distance_raw(k, t):
    if k == 0:
        return 2.0 * t
    s = math.sqrt(abs(k))
    if k > 0:
        return 2.0 / s * np.arctan(s * t)
    return 2.0 / s * np.arctanh(s * t)


def radial_distance(space: ModelSpace, t) -> np.ndarray:
    """Geodesic length of the coordinate segment from the origin to norm ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("coordinate norm must be nonnegative")
    if space.k < 0 and np.any(t >= space.rho):
        raise DomainError(f"coordinate norm must be < rho={space.rho} for k<0")
    if space.k > 0 and np.any(t > space.rho * (1 + _HEMI_TOL)):
        raise DomainError(f"coordinate norm must be <= rho={space.rho} (hemisphere) for k>0")
    return _radial_distance_raw(space.k, t)


def coordinate_radius(space: ModelSpace, r) -> np.ndarray:
    """Inverse of :func:`radial_distance`: coordinate norm at geodesic radius ``r``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise DomainError("geodesic radius must be finite and nonnegative")
    k = space.k
    if k == 0:
        return r / 2.0
    s = math.sqrt(abs(k))
    if k > 0:
        if np.any(r > space.max_radius * (1 + _HEMI_TOL)):
            raise DomainError(f"geodesic radius exceeds the hemisphere bound pi*rho/2={space.max_radius}")
        return np.tan(np.minimum(s * r / 2.0, math.pi / 4)) / s
    return np.tanh(s * r / 2.0) / s


def _check_trig_range(space, r):
    if space.k > 0 and np.any(math.sqrt(space.k) * np.asarray(r) >= math.pi):
        raise DomainError("sqrt(k)*r must be < pi")


def h_k(space: ModelSpace, r) -> np.ndarray:
    """Warping function of geodesic polar coordinates: sin, identity or sinh."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be nonnegative")
    _check_trig_range(space, r)
    k = space.k
    if k == 0:
        return r.copy()
    s = math.sqrt(abs(k))
    return np.sin(s * r) / s if k > 0 else np.sinh(s * r) / s


def hprime_k(space: ModelSpace, r) -> np.ndarray:
    """Derivative of :func:`h_k`; also the projection factor for curvatures."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be nonnegative")
    _check_trig_range(space, r)
    k = space.k
    if k == 0:
        return np.ones_like(r)
    s = math.sqrt(abs(k))
    return np.cos(s * r) if k > 0 else np.cosh(s * r)


def tau_k(space: ModelSpace, r) -> np.ndarray:
    """Principal curvature of a geodesic sphere of radius ``r`` (inward normal)."""
    r = np.asarray(r, dtype=float)
    if np.any(r == 0):
        raise SingularityError("tau_k is singular at r = 0")
    if np.any(r < 0):
        raise DomainError("radius must be positive")
    _check_trig_range(space, r)
    k = space.k
    if k == 0:
        return 1.0 / r
    s = math.sqrt(abs(k))
    return s / np.tan(s * r) if k > 0 else s / np.tanh(s * r)


def exp_origin(space: ModelSpace, r, theta) -> np.ndarray:
    """Point at geodesic distance ``r`` from the origin in unit direction ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != space.n:
        raise ArgumentError(f"direction must have {space.n} components")
    if np.any(np.abs(np.linalg.norm(theta, axis=-1) - 1.0) > 1e-12):
        raise ArgumentError("direction must be a unit vector")
    t = coordinate_radius(space, r)
    return np.asarray(t)[..., None] * theta


def geodesic_distance(space: ModelSpace, x, y) -> np.ndarray:
    """Distance d(x, y): move ``x`` to the origin, then measure radially."""
    from .moebius import to_origin

    x = space.check(x)
    y = space.check(y)
    if x.ndim == 1:
        img = to_origin(space, x).apply(y)
        t = np.linalg.norm(img, axis=-1)
        return _radial_distance_raw(space.k, _clip_norm(space, t))
    x, y = np.broadcast_arrays(x, y)
    out = np.empty(x.shape[:-1])
    for idx in np.ndindex(out.shape):
        img = to_origin(space, x[idx]).apply(y[idx])
        out[idx] = _radial_distance_raw(space.k, _clip_norm(space, np.linalg.norm(img)))
    return out


def _clip_norm(space, t):
    # For k > 0 the image of y may leave the hemisphere (distances reach
    # pi*rho), so no clipping; for k < 0 round-off can hit the boundary.
    if space.k < 0:
        return np.minimum(t, space.rho * (1 - 1e-16))
    return t


def distance_closed_form(space: ModelSpace, x, y) -> np.ndarray:
    """Vectorised closed-form distance, used internally for bulk evaluations.

    ``d = (2/s) F(s |x - y| / sqrt(1 + 2k x.y + k^2 |x|^2 |y|^2))`` with
    ``F = arctan`` (k>0) or ``artanh`` (k<0) and ``s = sqrt|k|``.  No
    admissibility checking; callers are expected to pass valid points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = space.k
    diff = np.linalg.norm(x - y, axis=-1)
    if k == 0:
        return 2.0 * diff
    xy = np.sum(x * y, axis=-1)
    den = np.sqrt(np.maximum(1 + 2 * k * xy + k * k * np.sum(x * x, -1) * np.sum(y * y, -1), 0.0))
    s = math.sqrt(abs(k))
    with np.errstate(divide="ignore", invalid="ignore"):
        q = s * diff / den
    if k > 0:
        return 2.0 / s * np.arctan2(s * diff, den)
    return 2.0 / s * np.arctanh(np.minimum(q, 1.0))


def log_factor_gradient(space: ModelSpace, x) -> np.ndarray:
    """Gradient of psi = log(2/(1+k|x|^2)), the log of the conformal factor."""
    x = np.asarray(x, dtype=float)
    return -2.0 * space.k * x / (1.0 + space.k * np.sum(x * x, axis=-1))[..., None]


def christoffel(space: ModelSpace, x) -> np.ndarray:
    """Christoffel symbols ``G[q, i, j]`` of the conformal metric at ``x``."""
    x = space.check(x)
    n = space.n
    dpsi = log_factor_gradient(space, x)
    eye = np.eye(n)
    return (
        np.einsum("iq,j->qij", eye, dpsi)
        + np.einsum("jq,i->qij", eye, dpsi)
        - np.einsum("ij,q->qij", eye, dpsi)
    )


def fd_gradient_hessian(f, p, h):
    """Central-difference gradient and Hessian of a scalar function."""
    p = np.asarray(p, dtype=float)
    n = p.size
    eye = np.eye(n) * h
    f0 = float(f(p))
    grad = np.empty(n)
    hess = np.empty((n, n))
    for i in range(n):
        fp, fm = float(f(p + eye[i])), float(f(p - eye[i]))
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * f0 + fm) / h**2
        for j in range(i + 1, n):
            v = (
                float(f(p + eye[i] + eye[j]))
                - float(f(p + eye[i] - eye[j]))
                - float(f(p - eye[i] + eye[j]))
                + float(f(p - eye[i] - eye[j]))
            ) / (4 * h**2)
            hess[i, j] = hess[j, i] = v
    return grad, hess


def default_fd_step(space: ModelSpace) -> float:
    return 1e-4 * (space.rho if space.rho is not None else 1.0)


def curvatures_from_derivatives(space: ModelSpace, p, grad, hess) -> np.ndarray:
    """Principal curvatures of the level set through ``p`` of a function with
    Euclidean gradient ``grad`` and Hessian ``hess``; the surface is oriented
    by the normal pointing to decreasing values (the interior ``{phi < 0}``).
    """
    p = np.asarray(p, dtype=float)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    gnorm = np.linalg.norm(grad)
    if not gnorm > 1e-10 * max(1.0, np.abs(hess).max(initial=0.0)):
        raise SingularityError(f"degenerate gradient |grad phi| = {gnorm:.3e} at {p.tolist()}")
    dpsi = log_factor_gradient(space, p)
    # Metric Hessian  d_ij phi - Gamma^q_ij d_q phi.
    mh = hess - (np.outer(dpsi, grad) + np.outer(grad, dpsi) - np.dot(dpsi, grad) * np.eye(space.n))
    lam = 2.0 / (1.0 + space.k * p.dot(p))
    normal = grad / gnorm
    # Orthonormal (Euclidean) basis of the tangent space.
    basis = np.linalg.svd(np.eye(space.n) - np.outer(normal, normal))[0][:, : space.n - 1]
    form = basis.T @ mh @ basis / (gnorm / lam)
    vals = np.linalg.eigvalsh(0.5 * (form + form.T)) / lam**2
    return np.sort(vals)[::-1]


def principal_curvatures(space: ModelSpace, domain, p, method: str = "auto", h_fd=None) -> CurvatureSpectrum:
    """Principal curvatures of ``{phi = 0}`` at ``p`` with respect to the inward normal.

    ``method`` selects the derivative source: ``"analytic"`` uses the domain's
    closed-form gradient and Hessian, ``"fd"`` central differences of ``phi``
    and ``"distance"`` central differences of the signed geodesic distance to
    the boundary.  ``"auto"`` prefers analytic derivatives when available.
    """
    p = space.check(p)
    if method == "auto":
        method = "analytic" if getattr(domain, "hess", None) is not None else "fd"
    h = default_fd_step(space) if h_fd is None else h_fd
    if method == "analytic":
        if domain.grad is None or domain.hess is None:
            raise ArgumentError("domain has no analytic derivatives")
        grad, hess = domain.grad(p), domain.hess(p)
    elif method == "fd":
        grad, hess = fd_gradient_hessian(domain.phi, p, h)
    elif method == "distance":
        from .domain import signed_distance

        grad, hess = fd_gradient_hessian(lambda q: signed_distance(domain, q), p, h)
    else:
        raise ArgumentError(f"unknown curvature method {method!r}")
    return CurvatureSpectrum(p, curvatures_from_derivatives(space, p, grad, hess))


def curvature_transfer(space: ModelSpace, lambda_tilde, R) -> np.ndarray:
    """Metric curvature at a geodesic-sphere contact from the curvature of the
    orthogonally projected surface: ``lambda_tilde * h_k'(R)``."""
    return np.asarray(lambda_tilde, dtype=float) * hprime_k(space, R)
