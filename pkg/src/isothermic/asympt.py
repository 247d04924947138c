"""Large-s asymptotics of the elliptic family: distance recovery, barriers,
geodesic-sphere integrals and the contact formula for sphere integrals."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .domain import dist_to_boundary, inradius, sample_boundary, _normal_geodesic
from .errors import (
    ArgumentError,
    CoverageError,
    DomainError,
    FitDiagnosticError,
    HypothesisViolation,
    PreconditionError,
)
from .modelspace import ModelSpace, coordinate_radius, h_k, hprime_k, tau_k
from .moebius import to_origin
from .pde import CLAMP_FLOOR, GridField, assemble_L, elliptic_solve, radial_oracle

# ------------------------------------------------------------------ ladder --


@dataclass(eq=False)
class ClosedFormField:
    """A field given by a function of the coordinates (used for oracle ladders)."""

    func: object
    domain: object = None
    boundary_value: float = 1.0
    meta: dict = field(default_factory=dict)
    log_func: object = None

    def interpolate(self, points, log=None) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.domain is not None:
            inside = self.domain.contains(pts, closed=True) | (np.abs(self.domain.phi(pts)) < 1e-12)
            if not np.all(inside):
                bad = pts[~inside]
                raise CoverageError(f"{len(bad)} points lie outside the domain", offending=bad)
        return np.asarray(self.func(pts), dtype=float)

    def log_values(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.log_func is not None:
            return np.asarray(self.log_func(pts), dtype=float)
        return np.log(self.interpolate(pts))


@dataclass(eq=False)
class SLadder:
    """Solutions ``W(s_j, .)`` for increasing ``s_j``.

    ``fields`` holds GridField (grid path) or ClosedFormField (oracle path)
    objects.  ``h`` is the grid spacing, ``None`` on the oracle path.
    """

    s: np.ndarray
    fields: list
    h: float | None = None
    space: ModelSpace | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        if len(self.s) != len(self.fields):
            raise ArgumentError("one field per s value is required")
        if np.any(np.diff(self.s) <= 0) or np.any(self.s <= 0):
            raise ArgumentError("ladder s values must be positive and strictly increasing")

    def __len__(self):
        return len(self.s)

    def log_values(self, j: int, points) -> tuple[np.ndarray, np.ndarray]:
        """``(log W(s_j, points), clamped_mask)``."""
        f = self.fields[j]
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if isinstance(f, GridField):
            vals = f.interpolate(pts, log=True)
            clamped = vals <= CLAMP_FLOOR * 10
            cmask = f.meta.get("clamped")
            if cmask is not None and np.any(cmask):
                # Any clamped node in the interpolation neighbourhood taints the value.
                near = np.min(np.linalg.norm(f.grid.points[cmask][None] - pts[:, None], axis=-1), axis=1)
                clamped |= near <= 3 * f.grid.h * math.sqrt(f.grid.n)
            return np.log(np.maximum(vals, 1e-320)), clamped
        logs = f.log_values(pts)
        return logs, logs < math.log(CLAMP_FLOOR)

    def values(self, j: int, points) -> np.ndarray:
        return np.asarray(self.fields[j].interpolate(np.atleast_2d(points)), dtype=float)

    def resolved(self, limit: float = 0.5) -> np.ndarray:
        """Mask of ladder entries with ``sqrt(s) h <= limit`` (all on the oracle path)."""
        if self.h is None:
            return np.ones(len(self.s), dtype=bool)
        return np.sqrt(self.s) * self.h <= limit * (1 + 1e-12)


def geometric_s(s0: float, count: int, ratio: float = 2.0) -> np.ndarray:
    """``s_j = s0 * ratio^j`` for ``j < count``."""
    return float(s0) * float(ratio) ** np.arange(count)


def grid_ladder(grid, s_values, operator=None) -> SLadder:
    """Solve the elliptic problem on ``grid`` for every ``s`` (one factorisation each)."""
    op = operator if operator is not None else assemble_L(grid)
    s_values = np.asarray(s_values, dtype=float)
    fields = [elliptic_solve(grid, s, operator=op) for s in s_values]
    clamp = [bool(np.any(f.meta["clamped"])) for f in fields]
    return SLadder(s_values, fields, grid.h, grid.space, {"clamped": clamp, "path": "grid"})


def oracle_ladder(space: ModelSpace, d_star: float, s_values, domain=None) -> SLadder:
    """Ladder of radial reference solutions on the geodesic ball of radius
    ``d_star`` about the origin."""
    fields = []
    for s in np.asarray(s_values, dtype=float):
        prof = radial_oracle(space, d_star, s)

        def lw(p, prof=prof):
            return prof.log_value(np.linalg.norm(p, axis=-1))

        def w(p, lw=lw):
            return np.exp(lw(p))

        fields.append(ClosedFormField(w, domain, 1.0, {"s": float(s), "oracle": "radial"}, lw))
    return SLadder(np.asarray(s_values, dtype=float), fields, None, space, {"path": "oracle"})


def closed_form_ladder(func_of_s, s_values, domain=None, log_func_of_s=None, space=None) -> SLadder:
    """Ladder from a closed form ``func_of_s(s)(points)``."""
    fields = []
    for s in np.asarray(s_values, dtype=float):
        lf = None if log_func_of_s is None else log_func_of_s(s)
        fields.append(ClosedFormField(func_of_s(s), domain, 1.0, {"s": float(s)}, lf))
    return SLadder(np.asarray(s_values, dtype=float), fields, None, space, {"path": "closed-form"})


# ---------------------------------------------------------------- Varadhan --


@dataclass
class VaradhanFit:
    """Per-s distance estimates and their extrapolated limit.

    The default model is ``e_j = F + c / sqrt(s_j)``; ``model="log"`` adds a
    ``log(s_j) / sqrt(s_j)`` term (the form seen at focal points such as
    the centre of a ball).
    """

    probe: list
    s: list
    estimates: list
    extrapolated: float
    c: float
    model: str
    residual: float
    used: list
    coefficients: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "probe": self.probe,
                "s": self.s,
                "estimates": self.estimates,
                "extrapolated": self.extrapolated,
                "c": self.c,
                "model": self.model,
                "model_residual": self.residual,
                "used": self.used,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "VaradhanFit":
        d = json.loads(text)
        return cls(d["probe"], d["s"], d["estimates"], d["extrapolated"], d["c"], d["model"], d["model_residual"], d["used"])


def fit_limit(s, est, good=None, *, model: str = "richardson", n_fit: int = 3):
    """Least-squares fit of ``est_j = F + c / sqrt(s_j) [+ d log(s_j) / sqrt(s_j)]``
    over the last ``n_fit`` entries flagged ``good``.

    Returns ``(coefficients, max_abs_residual, used_indices)``.
    """
    s = np.asarray(s, dtype=float)
    est = np.asarray(est, dtype=float)
    good = np.isfinite(est) if good is None else np.asarray(good, dtype=bool) & np.isfinite(est)
    if model not in ("richardson", "log"):
        raise ArgumentError("model must be 'richardson' or 'log'")
    n_fit = max(int(n_fit), 3)
    idx = np.nonzero(good)[0][-n_fit:]
    if len(idx) < (3 if model == "log" else 2):
        raise PreconditionError("too few usable ladder entries for the fit")
    x = 1.0 / np.sqrt(s[idx])
    cols = [np.ones(len(idx)), x]
    if model == "log":
        cols.append(np.log(s[idx]) * x)
    V = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(V, est[idx], rcond=None)
    return coef, float(np.abs(V @ coef - est[idx]).max()), idx


def varadhan_extract(
    ladder: SLadder,
    probe,
    *,
    model: str = "richardson",
    n_fit: int = 3,
    monotone_tol: float = 1e-6,
    check: bool = True,
) -> VaradhanFit:
    """Estimate ``dist(probe, boundary)`` from ``-log W(s, probe) / sqrt(s)``.

    The last ``n_fit`` unclamped entries are fitted by least squares.  With
    ``check`` a :class:`FitDiagnosticError` is raised when the tail of the
    estimates is not monotone (beyond ``monotone_tol`` relative), which
    signals an under-resolved boundary layer.
    """
    probe = np.asarray(probe, dtype=float)
    logs, clamped = [], []
    for j in range(len(ladder)):
        lv, cl = ladder.log_values(j, probe[None])
        logs.append(float(lv[0]))
        clamped.append(bool(cl[0]))
    s = ladder.s
    good = np.array([not c and math.isfinite(v) for c, v in zip(clamped, logs)])
    if good.sum() < 3:
        raise PreconditionError("need at least 3 unclamped ladder entries at the probe")
    est = -np.array(logs) / np.sqrt(s)
    coef, resid, idx = fit_limit(s, est, good, model=model, n_fit=n_fit)
    if check:
        tail = est[np.nonzero(good)[0]][-max(3, n_fit):]
        d = np.diff(tail)
        scale = monotone_tol * max(1.0, float(np.abs(tail).max()))
        if not (np.all(d >= -scale) or np.all(d <= scale)):
            raise FitDiagnosticError(
                f"estimates {np.round(tail, 8).tolist()} are not monotone; the boundary layer is likely "
                f"under-resolved (sqrt(s) h too large)"
            )
    return VaradhanFit(
        probe.tolist(),
        s.tolist(),
        est.tolist(),
        float(coef[0]),
        float(coef[1]),
        model,
        resid,
        idx.tolist(),
        coef.tolist(),
    )


# ----------------------------------------------------------------- barriers --


def barrier_threshold(epsilon: float, M_delta: float) -> float:
    """``(1 + eps) / eps^2 * M_delta^2``."""
    return (1 + epsilon) / epsilon**2 * M_delta**2


@dataclass
class BarrierParams:
    """Parameters of the exponential barriers ``exp(-sqrt(s(1 -+ eps)) F)``."""

    epsilon: float
    s_min: float
    delta: float
    M_delta: float

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ArgumentError("epsilon must lie in (0, 1)")
        if self.s_min < barrier_threshold(self.epsilon, self.M_delta) * (1 - 1e-12):
            raise PreconditionError(
                f"s_min={self.s_min} is below (1+eps)/eps^2 * M_delta^2 = "
                f"{barrier_threshold(self.epsilon, self.M_delta):.6g}"
            )


def _apply_L_fd(space, f, x, h):
    n = space.n
    f0 = f(x)
    lap = np.zeros(len(x))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        lap += f(x + e) - 2 * f0 + f(x - e)
    coef = (0.5 * (1 + space.k * np.sum(x * x, axis=-1))) ** 2
    return coef * lap / h**2


def collar_points(domain, delta: float, n_boundary: int = 64, n_depth: int = 8) -> np.ndarray:
    """Points of the collar ``{0 < F < delta}`` along inward normal geodesics."""
    b = sample_boundary(domain, n_boundary)
    depths = delta * (np.arange(1, n_depth + 1) - 0.5) / n_depth
    pts = [_normal_geodesic(domain.space, b.points, b.normals, np.full(len(b.points), d)) for d in depths]
    return np.concatenate(pts)


def measure_M_delta(domain, delta: float | None = None, h_fd: float | None = None, **kw) -> tuple[float, float]:
    """``(delta, sup |L F|)`` over the collar, ``F`` the distance to the boundary.

    ``delta`` defaults to a tenth of the inradius; ``L F`` is evaluated by
    central differences of :func:`dist_to_boundary`.
    """
    if delta is None:
        delta = 0.1 * inradius(domain)
    pts = collar_points(domain, delta, **kw)
    if h_fd is None:
        h_fd = 1e-3 * delta
    space = domain.space

    def F(x):
        return np.asarray(dist_to_boundary(domain, x), dtype=float)

    # Keep stencils inside the closed domain.
    inner = F(pts) > 2 * h_fd * 2
    vals = np.abs(_apply_L_fd(space, F, pts[inner], h_fd))
    return float(delta), float(vals.max())


def barrier_params(domain, epsilon: float, s_min: float | None = None, delta: float | None = None) -> BarrierParams:
    """BarrierParams with ``M_delta`` measured on ``domain`` and ``s_min`` at its threshold."""
    delta, M = measure_M_delta(domain, delta)
    thr = barrier_threshold(epsilon, M)
    return BarrierParams(epsilon, thr if s_min is None else max(float(s_min), thr), delta, M)


@dataclass
class BarrierReport:
    epsilon: float
    s_min: float
    slack: float
    checked_s: list
    excluded_s: list
    n_checks: int
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations


def barrier_check(ladder: SLadder, domain, params: BarrierParams, probes, slack: float | None = None) -> BarrierReport:
    """Check ``W_- <= W <= W_+`` at the probes for every ladder ``s >= s_min``.

    ``W_-+ = exp(-sqrt(s (1 +- eps)) F)``.  The default slack is ``10 h^2``
    (zero on the oracle path).  Entries below ``s_min`` are excluded from
    the assertion and listed in the report.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    try:
        F = np.asarray(dist_to_boundary(domain, probes), dtype=float)
    except DomainError as exc:
        raise DomainError(f"distance to the boundary unavailable at a probe: {exc}") from exc
    if slack is None:
        slack = 0.0 if ladder.h is None else 10 * ladder.h**2
    eps = params.epsilon
    checked, excluded, violations = [], [], []
    n_checks = 0
    for j, s in enumerate(ladder.s):
        if s < params.s_min:
            excluded.append(float(s))
            continue
        checked.append(float(s))
        W = ladder.values(j, probes)
        upper = np.exp(-math.sqrt(s * (1 - eps)) * F)
        lower = np.exp(-math.sqrt(s * (1 + eps)) * F)
        n_checks += len(probes)
        for i in range(len(probes)):
            if W[i] > upper[i] + slack:
                violations.append({"s": float(s), "probe": probes[i].tolist(), "side": "upper", "W": float(W[i]), "barrier": float(upper[i])})
            if W[i] < lower[i] - slack:
                violations.append({"s": float(s), "probe": probes[i].tolist(), "side": "lower", "W": float(W[i]), "barrier": float(lower[i])})
    return BarrierReport(eps, params.s_min, slack, checked, excluded, n_checks, violations)


# ----------------------------------------------------------- sphere integrals --


def sphere_nodes(space: ModelSpace, center, R: float, m: int):
    """Quadrature nodes on the geodesic sphere ``S_R(center)`` and weights of
    the metric area element (they sum to the sphere's area).

    n = 2: ``m`` equally spaced angles.  n = 3: Gauss-Legendre in the polar
    cosine times uniform azimuth with about ``m`` nodes in total.
    """
    n = space.n
    t = float(coordinate_radius(space, R))
    area_factor = float(h_k(space, R)) ** (n - 1)
    if n == 2:
        th = 2 * np.pi * np.arange(m) / m
        y = t * np.stack([np.cos(th), np.sin(th)], axis=-1)
        w = np.full(m, 2 * np.pi / m)
    elif n == 3:
        n_th = max(2, int(round(math.sqrt(m / 2))))
        n_ph = max(3, int(math.ceil(m / n_th)))
        mu, w_mu = np.polynomial.legendre.leggauss(n_th)
        ph = 2 * np.pi * np.arange(n_ph) / n_ph
        MU, PH = np.meshgrid(mu, ph, indexing="ij")
        st = np.sqrt(1 - MU**2)
        y = t * np.stack([st * np.cos(PH), st * np.sin(PH), MU], axis=-1).reshape(-1, 3)
        w = np.outer(w_mu, np.full(n_ph, 2 * np.pi / n_ph)).ravel()
    else:
        raise ArgumentError("sphere quadrature implemented for n = 2 and n = 3")
    center = space.check(center)
    if np.linalg.norm(center) == 0:
        x = y
    else:
        x = to_origin(space, center).inverse().apply(y)
    return x, w * area_factor


def sphere_integral(space: ModelSpace, f, center, R: float, m: int = 128) -> float:
    """Integral of ``f`` over the geodesic sphere of radius ``R`` about ``center``.

    ``f`` is a vectorised function of coordinates or any field exposing
    ``interpolate`` (grid fields raise CoverageError if the sphere leaves
    the domain).
    """
    if space.n == 2 and m < 64:
        raise ArgumentError("use at least 64 nodes in n = 2")
    x, w = sphere_nodes(space, center, R, m)
    vals = f.interpolate(x) if hasattr(f, "interpolate") else np.asarray(f(x), dtype=float)
    return float(np.sum(w * vals))


# ------------------------------------------------------------ contact formula --


@dataclass
class Thm42Series:
    s: list
    values: list
    excluded: list

    def ratio(self, rhs: float) -> np.ndarray:
        return np.asarray(self.values) / rhs


def thm42_lhs(ladder: SLadder, phi, center, R: float, m: int = 4096, resolution: float = 0.5) -> Thm42Series:
    """``s^{(n-1)/4} * int_{S_R(center)} phi W(s, .) dA`` along the ladder.

    Entries with ``sqrt(s) h > resolution`` are excluded with a warning.
    """
    space = ladder.space
    if space is None:
        raise ArgumentError("ladder has no model space attached")
    n = space.n
    x, w = sphere_nodes(space, center, R, m)
    phi_vals = np.broadcast_to(np.asarray(phi(x) if callable(phi) else phi, dtype=float), (len(x),))
    ok = ladder.resolved(resolution)
    excluded = ladder.s[~ok].tolist()
    if excluded:
        warnings.warn(f"excluding under-resolved s values {excluded}", RuntimeWarning, stacklevel=2)
    s_used, vals = [], []
    for j in np.nonzero(ok)[0]:
        if not np.any(phi_vals):
            v = 0.0
        else:
            v = float(np.sum(w * phi_vals * ladder.values(j, x)))
        s_used.append(float(ladder.s[j]))
        vals.append(ladder.s[j] ** ((n - 1) / 4) * v)
    return Thm42Series(s_used, vals, excluded)


def thm42_rhs(space: ModelSpace, R: float, contacts, phi) -> float:
    """Closed-form limit of :func:`thm42_lhs` from the contact curvatures.

    Parameters
    ----------
    contacts : list of (point, curvatures)
        Contact points of the sphere with the boundary and the principal
        curvatures of the boundary there (array or CurvatureSpectrum).
    phi : callable or float
    """
    n = space.n
    tau = float(tau_k(space, R))
    hp = float(hprime_k(space, R))
    total = 0.0
    for point, curv in contacts:
        lam = np.asarray(getattr(curv, "values", curv), dtype=float).reshape(-1)
        if lam.size != n - 1:
            raise ArgumentError(f"expected {n - 1} principal curvatures per contact")
        if np.any(lam >= tau):
            raise HypothesisViolation(
                f"principal curvature {lam.max():.6g} >= tau_k(R) = {tau:.6g} at {np.asarray(point).tolist()}",
                point=np.asarray(point),
            )
        bracket = np.prod(tau - lam) / hp ** (n - 1)
        pv = float(phi(np.asarray(point, dtype=float)[None])[0]) if callable(phi) else float(phi)
        total += pv / math.sqrt(bracket)
    return (2 * math.pi) ** ((n - 1) / 2) * total


__all__ = [
    "BarrierParams",
    "BarrierReport",
    "ClosedFormField",
    "SLadder",
    "Thm42Series",
    "VaradhanFit",
    "barrier_check",
    "barrier_params",
    "barrier_threshold",
    "closed_form_ladder",
    "collar_points",
    "geometric_s",
    "grid_ladder",
    "measure_M_delta",
    "oracle_ladder",
    "sphere_integral",
    "sphere_nodes",
    "thm42_lhs",
    "thm42_rhs",
    "varadhan_extract",
    "fit_limit",
]
