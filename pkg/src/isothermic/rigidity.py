"""Ball / non-ball test: stationarity of an inner parallel surface, recovery of
its distance to the boundary, and constancy of the boundary curvature product."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .asympt import SLadder, fit_limit, geometric_s, grid_ladder
from .domain import BoundarySample, inradius, parallel_surface, sample_boundary
from .errors import ArgumentError, HypothesisViolation, IncompleteInputError, PreconditionError
from .modelspace import ModelSpace, principal_curvatures, tau_k
from .pde import build_grid, assemble_L, heat_solve

SCHEMA_VERSION = "1.0"

__all__ = [
    "SCHEMA_VERSION",
    "Thresholds",
    "StationarityResult",
    "RFit",
    "ProductResult",
    "RigidityReport",
    "stationarity_check",
    "extract_R",
    "curvature_product",
    "verdict",
    "default_ladder",
    "run_rigidity",
]


@dataclass(frozen=True)
class Thresholds:
    """Acceptance thresholds: stationarity score, relative product spread and
    relative error of the recovered distance.  A check fails "with margin"
    when its value reaches ``margin`` times the threshold."""

    tau_s: float = 5e-3
    tau_p: float = 5e-2
    tau_R: float = 0.05
    margin: float = 2.0


@dataclass
class StationarityResult:
    """``score = max_t max_x |u(t, x) - a(t)| / max(a(t), a_floor)`` over the
    times with ``a(t) >= a_min``; ``a(t)`` is the sample mean on the surface."""

    score: float
    times: list
    a_hat: list
    deviation: list
    used: list
    degenerate: bool = False
    a_min: float = 0.0


@dataclass
class RFit:
    """Distance recovered from ``A(s) = mean of W(s, .)`` on the surface."""

    R: float
    c: float
    s: list
    A: list
    estimates: list
    spread: list
    used: list
    residual: float
    warning: str | None = None


@dataclass
class ProductResult:
    """``prod_j (tau_k(R) - lambda_j(x))`` at boundary samples."""

    R: float
    tau: float
    points: list
    curvatures: list
    products: list
    spread: float


def stationarity_check(
    trace,
    surface: BoundarySample,
    times=None,
    a_floor: float = 1e-12,
    a_min: float = 0.1,
) -> StationarityResult:
    """How far ``u(t, .)`` is from constant on a surface inside the domain.

    Parameters
    ----------
    trace : HeatTrace
        Stored snapshots of the heat solution.
    surface : BoundarySample
        Samples of the surface; all must lie strictly inside the domain.
    times : array_like, optional
        Snapshot times to use (default all).
    a_floor : float
        Normalisation floor for the mean ``a(t)``.
    a_min : float
        Times with ``a(t) < a_min`` are excluded from the score: there the
        solution on the surface is an exponentially small tail whose relative
        accuracy is limited by the time step, not by the geometry.
    """
    pts = np.atleast_2d(np.asarray(surface.points, dtype=float))
    dom = trace.grid.domain
    phi = dom(pts)
    if np.any(phi >= 0):
        raise PreconditionError("the surface touches or leaves the domain boundary")
    if not np.all(trace.grid.contains(pts)):
        raise PreconditionError("surface samples are not covered by the grid interior")
    times = np.asarray(trace.times if times is None else times, dtype=float)
    a_hat, dev = [], []
    for t in times:
        v = trace.field_at(t).interpolate(pts, log=False)
        a = float(v.mean())
        a_hat.append(a)
        dev.append(float(np.abs(v - a).max()))
    a_hat, dev = np.array(a_hat), np.array(dev)
    used = a_hat >= a_min
    if len(pts) < 2:
        return StationarityResult(0.0, times.tolist(), a_hat.tolist(), dev.tolist(), used.tolist(), True, a_min)
    if not used.any():
        raise PreconditionError(f"a(t) never reaches a_min={a_min}; extend the trace")
    score = float(np.max(dev[used] / np.maximum(a_hat[used], a_floor)))
    return StationarityResult(score, times.tolist(), a_hat.tolist(), dev.tolist(), used.tolist(), False, a_min)


def _weighted_mean(values, weights):
    if weights is None:
        return float(np.mean(values))
    return float(np.sum(values * weights) / np.sum(weights))


def extract_R(ladder: SLadder, surface, *, model: str = "richardson", n_fit: int = 3) -> RFit:
    """Distance from the surface to the boundary from the large-s decay of
    ``A(s)``, the surface mean of ``W(s, .)``.

    ``surface`` is a BoundarySample (area-weighted mean) or an array of points
    (plain mean).  A warning is attached, and emitted, when ``W`` varies over
    the surface by more than 10% of ``A`` for some ``s``.
    """
    if isinstance(surface, BoundarySample):
        pts, w = surface.points, surface.weights
    else:
        pts, w = np.atleast_2d(np.asarray(surface, dtype=float)), None
    A, spread, good = [], [], []
    for j in range(len(ladder)):
        logs, clamped = ladder.log_values(j, pts)
        shift = float(np.max(logs))
        vals = np.exp(logs - shift)
        mean = _weighted_mean(vals, w)
        A.append(shift + math.log(mean))
        spread.append(float((vals.max() - vals.min()) / mean))
        good.append(not bool(np.any(clamped)))
    s = ladder.s
    logA = np.array(A)
    est = -logA / np.sqrt(s)
    if sum(good) < 3:
        raise PreconditionError("need at least 3 unclamped ladder entries on the surface")
    coef, resid, idx = fit_limit(s, est, np.array(good), model=model, n_fit=n_fit)
    warning = None
    if max(spread) > 0.1:
        warning = f"non-stationary: W varies by {max(spread):.3g} of its mean over the surface"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return RFit(float(coef[0]), float(coef[1]), s.tolist(), logA.tolist(), est.tolist(),
                spread, idx.tolist(), resid, warning)


def curvature_product(space: ModelSpace, domain, R: float, samples, method: str = "auto") -> ProductResult:
    """The products ``prod_j (tau_k(R) - lambda_j(x))`` over boundary samples.

    Raises HypothesisViolation at the first sample with ``lambda_j >= tau_k(R)``.
    The relative spread is ``(max - min) / |mean|``.
    """
    if not R > 0:
        raise ArgumentError("R must be positive")
    pts = samples.points if isinstance(samples, BoundarySample) else np.atleast_2d(np.asarray(samples, float))
    tau = float(tau_k(space, R))
    curv, prods = [], []
    for p in pts:
        lam = principal_curvatures(space, domain, p, method=method).values
        factors = tau - lam
        if np.any(factors <= 0):
            raise HypothesisViolation(
                f"principal curvature {lam.max():.6g} >= tau_k(R) = {tau:.6g} at {p.tolist()}", point=p
            )
        curv.append(lam.tolist())
        prods.append(float(np.prod(factors)))
    prods_a = np.array(prods)
    spread = float((prods_a.max() - prods_a.min()) / abs(prods_a.mean()))
    return ProductResult(float(R), tau, np.asarray(pts).tolist(), curv, prods, spread)


@dataclass
class RigidityReport:
    """All numbers behind a ball / non-ball verdict."""

    verdict: str
    checks: dict
    thresholds: dict
    stationarity: dict | None
    R_fit: dict | None
    R_true: float | None
    products: dict | None
    hypothesis: str | None = None
    meta: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RigidityReport":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ArgumentError(f"unsupported report schema {d.get('schema_version')!r}")
        return cls(**d)

    def recompute(self) -> str:
        """Verdict from the stored numbers alone."""
        return _decide(self.checks, Thresholds(**self.thresholds), self.hypothesis)


def _decide(checks, th: Thresholds, hypothesis):
    if hypothesis is not None:
        return "rejected"
    limits = {"stationarity": th.tau_s, "spread": th.tau_p, "R_error": th.tau_R}
    if all(checks[k] < limits[k] for k in limits):
        return "consistent-with-geodesic-ball"
    if any(checks[k] >= th.margin * limits[k] for k in limits):
        return "rejected"
    return "inconclusive"


def verdict(
    stationarity: StationarityResult | None,
    R_fit: RFit | None,
    R_true: float | None,
    products: ProductResult | HypothesisViolation | None,
    thresholds: Thresholds | None = None,
    meta: dict | None = None,
) -> RigidityReport:
    """Combine the component analyses into a report.

    The surface is consistent with a geodesic ball when the stationarity
    score, the product spread and the relative error of the recovered
    distance are all below their thresholds; rejected when any of them
    reaches ``margin`` times its threshold or a curvature hypothesis fails;
    inconclusive otherwise.  Pass the HypothesisViolation raised by
    :func:`curvature_product` as ``products`` to record it.
    """
    th = thresholds or Thresholds()
    missing = [name for name, v in (("stationarity", stationarity), ("R_fit", R_fit),
                                     ("R_true", R_true), ("products", products)) if v is None]
    if missing:
        raise IncompleteInputError(f"missing component(s): {', '.join(missing)}")
    hypothesis = None
    if isinstance(products, HypothesisViolation):
        hypothesis = str(products)
        spread = math.inf
        prod_dict = None
    else:
        spread = products.spread
        prod_dict = asdict(products)
    checks = {
        "stationarity": float(stationarity.score),
        "spread": float(spread),
        "R_error": float(abs(R_fit.R - R_true) / R_true),
    }
    v = _decide(checks, th, hypothesis)
    return RigidityReport(v, checks, asdict(th), asdict(stationarity), asdict(R_fit), float(R_true),
                          prod_dict, hypothesis, dict(meta or {}))


def default_ladder(h: float, count: int = 4, top: float = 0.125) -> np.ndarray:
    """s values doubling up to ``sqrt(s) h = top``."""
    s_top = (top / h) ** 2
    return geometric_s(s_top / 2.0 ** (count - 1), count)


def run_rigidity(
    space: ModelSpace,
    domain,
    *,
    h: float = 1 / 128,
    R: float | None = None,
    dt: float = 1e-3,
    t_end: float = 1.0,
    s_values=None,
    m_surface: int = 64,
    m_boundary: int = 128,
    thresholds: Thresholds | None = None,
    a_min: float = 0.1,
) -> RigidityReport:
    """Full pipeline on one domain.

    The inner surface is the parallel surface at distance ``R`` (default 0.3
    times the inradius), so the distance to recover is ``R`` itself.
    """
    rin = inradius(domain)
    R = 0.3 * rin if R is None else float(R)
    surface = parallel_surface(domain, R, m_surface)
    grid = build_grid(domain, h)
    op = assemble_L(grid)
    trace = heat_solve(grid, t_end, dt, save_every=max(1, int(round(0.01 / dt))), operator=op)
    stat = stationarity_check(trace, surface, a_min=a_min)
    s_values = default_ladder(h) if s_values is None else np.asarray(s_values, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ladder = grid_ladder(grid, s_values, op)
        rfit = extract_R(ladder, surface)
    try:
        prods = curvature_product(space, domain, R, sample_boundary(domain, m_boundary))
    except HypothesisViolation as exc:
        prods = exc
    meta = {
        "k": space.k, "n": space.n, "domain": domain.name, "params": domain.params,
        "h": h, "dt": dt, "t_end": t_end, "R": R, "inradius": rin,
        "s_values": list(map(float, s_values)), "m_surface": m_surface, "m_boundary": m_boundary,
    }
    return verdict(stat, rfit, R, prods, thresholds, meta)
