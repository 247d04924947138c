"""Heat, elliptic and wave solvers and the Laplace-transform bridges."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError, StabilityError
from .field import GridField
from .operator import ShiftedSolver, assemble_L

CLAMP_FLOOR = 1e-300


@dataclass(eq=False)
class HeatTrace:
    """Time history of a grid solution.

    ``fields`` holds snapshots at ``times`` (may be empty when snapshots were
    not stored); ``probe_values`` has one row per step time in
    ``probe_times``.  ``transforms`` maps a Laplace parameter to the field
    accumulated on the fly during stepping.
    """

    grid: object
    times: np.ndarray
    fields: list
    probe_points: np.ndarray | None = None
    probe_times: np.ndarray | None = None
    probe_values: np.ndarray | None = None
    transforms: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(t) and (t[0] <= 0 or np.any(np.diff(t) <= 0)):
            raise ArgumentError("trace times must be positive and strictly increasing")
        self.times = t

    def field_at(self, t: float) -> GridField:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ArgumentError(f"no stored snapshot at t={t}")
        return self.fields[i]


def _exp_weights(s, t0, t1):
    """Weights ``(w0, w1)`` with ``s * int_{t0}^{t1} e^{-st} u dt = w0 u0 + w1 u1``
    for ``u`` linear on the interval (exact product integration)."""
    x = s * (t1 - t0)
    a = math.exp(-s * t0)
    if x < 1e-4:
        # Series of (1 - e^{-x}(1 + x)) / x  and  (1 - e^{-x}).
        tail = x / 2 - x * x / 3 + x**3 / 8
        total = x - x * x / 2 + x**3 / 6
    else:
        tail = (-math.expm1(-x) - x * math.exp(-x)) / x
        total = -math.expm1(-x)
    w1 = a * tail
    return a * total - w1, w1


class _Transform:
    """Running ``s * int_0^t u e^{-st} dt`` for several ``s``."""

    def __init__(self, s_values, N):
        self.s = [float(s) for s in s_values]
        for s in self.s:
            if not s > 0:
                raise ArgumentError("Laplace parameters must be positive")
        self.acc = {s: np.zeros(N) for s in self.s}

    def add(self, t0, t1, u0, u1, right: bool = False):
        """Add one step; ``right`` integrates ``u1`` as constant on the step
        (the backward-Euler reading, used for the startup steps)."""
        for s in self.s:
            w0, w1 = _exp_weights(s, t0, t1)
            if w0 == 0.0 and w1 == 0.0:
                continue
            if right:
                self.acc[s] += (w0 + w1) * u1
            else:
                self.acc[s] += w0 * u0 + w1 * u1


def _initial_vector(grid, initial):
    if callable(initial):
        return np.asarray(initial(grid.points), dtype=float)
    return np.full(grid.size, float(initial))


def heat_solve(
    grid,
    t_end: float,
    dt: float,
    boundary: float = 1.0,
    initial=0.0,
    *,
    save_every: int | None = 1,
    probes=None,
    laplace_s=(),
    rannacher_steps: int = 4,
    operator=None,
) -> HeatTrace:
    """Crank-Nicolson solution of ``u_t = L u`` with ``u = boundary`` on the
    boundary for t > 0 and ``u(0) = initial``.

    The first ``rannacher_steps`` half-steps are backward Euler (they share
    the Crank-Nicolson matrix), which damps the stiff modes excited by the
    jump between initial and boundary data.

    Parameters
    ----------
    save_every : int or None
        Store a snapshot every this many full steps (``None``: only the last).
        The backward-Euler startup half-steps are always stored when
        snapshots are kept.
    probes : array_like, shape (P, n), optional
        Points whose interpolated values are recorded at every step.
    laplace_s : sequence of float
        Laplace parameters whose transform ``s int_0^inf u e^{-st} dt`` is
        accumulated during stepping (with the analytic tail ``u(T) e^{-sT}``).
    """
    if not dt > 0 or not t_end > 0:
        raise ArgumentError("dt and t_end must be positive")
    A, b = operator if operator is not None else assemble_L(grid)
    solver = ShiftedSolver(A, 1.0, 0.5 * dt)
    load = b * boundary
    u = _initial_vector(grid, initial)
    probe_pts = None if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    transform = _Transform(laplace_s, grid.size)
    times, fields, probe_t, probe_v = [], [], [], []
    t = 0.0
    nsteps = int(math.ceil(t_end / dt - 1e-9))
    max_gmres = 0

    def record(step, t, u, final=False):
        if probe_pts is not None:
            probe_t.append(t)
            probe_v.append(GridField(grid, u, boundary).interpolate(probe_pts, log=False))
        if (save_every is not None and step % save_every == 0) or final:
            if not times or times[-1] < t:
                times.append(t)
                fields.append(GridField(grid, u.copy(), boundary, {"time": t}))

    half = 0
    for step in range(1, nsteps + 1):
        u_old = u
        t_old = t
        if half < rannacher_steps:
            # Two backward-Euler half-steps make up one full step.
            for _ in range(2):
                prev, tp = u, t
                u = solver.solve(u + 0.5 * dt * load)
                t = tp + 0.5 * dt
                transform.add(tp, t, prev, u, right=True)
                half += 1
                if save_every is not None and t < step * dt * (1 - 1e-12):
                    # Mid-step snapshots keep the offline transform exact on
                    # the startup interval.
                    times.append(t)
                    fields.append(GridField(grid, u.copy(), boundary, {"time": t}))
        else:
            rhs = u + 0.5 * dt * (A @ u) + dt * load
            u = solver.solve(rhs)
            t = t_old + dt
            transform.add(t_old, t, u_old, u)
        max_gmres = max(max_gmres, solver.last.get("gmres_iterations", 0))
        record(step, t, u, final=step == nsteps)
    transforms = {}
    for s in transform.s:
        W = transform.acc[s] + u * math.exp(-s * t)
        meta = {"s": s, "mode": "heat", "T": t, "tail": "u(T) exp(-sT)"}
        if s * t < 5:
            meta["warning"] = f"truncation: s*T = {s * t:.3g} < 5"
        transforms[s] = GridField(grid, W, boundary, meta)
    return HeatTrace(
        grid,
        np.array(times),
        fields,
        probe_pts,
        np.array(probe_t) if probe_pts is not None else None,
        np.array(probe_v) if probe_pts is not None else None,
        transforms,
        {"dt": dt, "t_end": t, "scheme": "crank-nicolson", "rannacher_half_steps": rannacher_steps,
         "startup_end": 0.5 * dt * half, "max_gmres": max_gmres},
    )


def elliptic_solve(grid, s: float, boundary: float = 1.0, operator=None) -> GridField:
    """Solve ``(L - s) W = 0`` in the domain with ``W = boundary`` on its boundary.

    Values below 1e-300 are clamped to that floor and flagged in
    ``meta["clamped"]`` (a boolean mask).
    """
    if not s > 0:
        raise ArgumentError("s must be positive")
    A, b = operator if operator is not None else assemble_L(grid)
    solver = ShiftedSolver(A, s, 1.0)
    W = solver.solve(b * boundary)
    clamped = W < CLAMP_FLOOR
    if clamped.any():
        W = np.where(clamped, CLAMP_FLOOR, W)
    return GridField(grid, W, boundary, {"s": float(s), "clamped": clamped, "solver": dict(solver.last)})


def stable_wave_step(grid, operator=None, safety: float = 0.9) -> float:
    """Largest leapfrog step allowed by the Gershgorin bound on the operator."""
    A, _ = operator if operator is not None else assemble_L(grid)
    rho = float(np.max(np.asarray(abs(A).sum(axis=1)).ravel()))
    return safety * 2.0 / math.sqrt(rho)


def wave_solve(
    grid,
    t_end: float,
    dt: float | None = None,
    boundary: float = 1.0,
    *,
    save_every: int | None = None,
    probes=None,
    laplace_s=(),
    operator=None,
) -> HeatTrace:
    """Leapfrog solution of ``v_tt = L v``, ``v = boundary`` on the boundary for
    t > 0, ``v = v_t = 0`` at t = 0.

    The step must satisfy ``dt <= 0.9 * 2 / sqrt(rho)`` with ``rho`` the
    Gershgorin bound of the discrete operator (on a regular stencil this is
    ``0.9 h / (c sqrt(n))`` with ``c`` the largest coordinate wave speed).
    ``laplace_s`` accumulates ``sqrt(s) int_0^T v e^{-sqrt(s) t} dt``.
    """
    if not t_end > 0:
        raise ArgumentError("t_end must be positive")
    op = operator if operator is not None else assemble_L(grid)
    A, b = op
    dt_max = stable_wave_step(grid, op)
    if dt is None:
        nsteps = int(math.ceil(t_end / dt_max))
        dt = t_end / nsteps
    if not dt > 0:
        raise ArgumentError("dt must be positive")
    if dt > dt_max * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.4g} exceeds the leapfrog stability bound {dt_max:.4g}")
    load = b * boundary
    probe_pts = None if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    rates = [math.sqrt(float(s)) for s in laplace_s]
    transform = _Transform(rates, grid.size)
    nsteps = int(math.ceil(t_end / dt - 1e-9))
    v_prev = np.zeros(grid.size)
    # Taylor start with zero velocity: v(dt) = dt^2/2 * (A v0 + load).
    v = 0.5 * dt * dt * load
    times, fields, probe_t, probe_v = [], [], [], []
    transform.add(0.0, dt, v_prev, v)
    peak = np.abs(v).max()
    for step in range(1, nsteps + 1):
        t = step * dt
        if probe_pts is not None:
            probe_t.append(t)
            probe_v.append(GridField(grid, v, boundary).interpolate(probe_pts, log=False))
        if (save_every is not None and step % save_every == 0) or step == nsteps:
            times.append(t)
            fields.append(GridField(grid, v.copy(), boundary, {"time": t}))
        if step == nsteps:
            break
        v_next = 2 * v - v_prev + dt * dt * (A @ v + load)
        transform.add(t, t + dt, v, v_next)
        v_prev, v = v, v_next
        peak = max(peak, np.abs(v).max())
    T = nsteps * dt
    transforms = {}
    for s, r in zip(laplace_s, rates):
        meta = {"s": float(s), "mode": "wave", "T": T, "tail": "none"}
        if r * T < 5:
            meta["warning"] = f"truncation: sqrt(s)*T = {r * T:.3g} < 5"
        transforms[float(s)] = GridField(grid, transform.acc[r], boundary, meta)
    return HeatTrace(
        grid,
        np.array(times),
        fields,
        probe_pts,
        np.array(probe_t) if probe_pts is not None else None,
        np.array(probe_v) if probe_pts is not None else None,
        transforms,
        {"dt": dt, "t_end": T, "scheme": "leapfrog", "dt_max": dt_max, "peak": float(peak)},
    )


def laplace_transform(trace: HeatTrace, s: float, mode: str = "heat") -> GridField:
    """Laplace transform of a stored trace.

    ``heat``: ``W = s int_0^inf u e^{-st} dt`` with the tail beyond the last
    snapshot taken as ``u(T) e^{-sT}``.  ``wave``:
    ``V = sqrt(s) int_0^T v e^{-sqrt(s) t} dt`` (no tail).  Snapshots are
    joined linearly from ``u(0) = 0`` and integrated exactly against the
    exponential, except on the backward-Euler startup interval
    (``trace.meta["startup_end"]``) where each snapshot is held constant back
    to the previous one.  A truncation warning is recorded when the decay over the
    trace, ``s T`` (heat) or ``sqrt(s) T`` (wave), is below 5.
    """
    if mode not in ("heat", "wave"):
        raise ArgumentError("mode must be 'heat' or 'wave'")
    if not trace.fields:
        raise ArgumentError("trace holds no snapshots; use the on-the-fly transform")
    rate = float(s) if mode == "heat" else math.sqrt(float(s))
    acc = np.zeros(trace.grid.size)
    prev_t, prev_u = 0.0, np.zeros(trace.grid.size)
    startup_end = float(trace.meta.get("startup_end", 0.0)) if mode == "heat" else 0.0
    for t, f in zip(trace.times, trace.fields):
        w0, w1 = _exp_weights(rate, prev_t, t)
        if t <= startup_end * (1 + 1e-12):
            acc += (w0 + w1) * f.values
        else:
            acc += w0 * prev_u + w1 * f.values
        prev_t, prev_u = t, f.values
    T = prev_t
    meta = {"s": float(s), "mode": mode, "T": T}
    if mode == "heat":
        acc += prev_u * math.exp(-rate * T)
    if rate * T < 5:
        meta["warning"] = f"truncation: decay {rate * T:.3g} < 5 over the trace"
        warnings.warn(meta["warning"], RuntimeWarning, stacklevel=2)
    boundary = trace.fields[-1].boundary_value
    return GridField(trace.grid, acc, boundary, meta)


def elliptic_residual(field: GridField, s: float, operator=None) -> float:
    """``max |(A - s) V + b g| / max |b g|``: how well a field solves the
    discrete elliptic system."""
    A, b = operator if operator is not None else assemble_L(field.grid)
    load = b * field.boundary_value
    r = A @ field.values - s * field.values + load
    return float(np.abs(r).max() / np.abs(load).max())


