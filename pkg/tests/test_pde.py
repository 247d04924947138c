import numpy as np
import pytest
import scipy.sparse as sps
from scipy import special

from isothermic.domain import ImplicitDomain, standard_shapes
from isothermic.errors import ArgumentError, ResolutionError, StabilityError
from isothermic.modelspace import ModelSpace, coordinate_radius
from isothermic.moebius import pullback_field, to_origin
from isothermic.pde import (
    GridField,
    HeatTrace,
    assemble_L,
    build_grid,
    coefficient,
    elliptic_residual,
    elliptic_solve,
    heat_solve,
    laplace_transform,
    radial_oracle,
    stable_wave_step,
    wave_solve,
)


@pytest.fixture(scope="module")
def disk():
    return standard_shapes(ModelSpace(0), "coordinate-ball", {"radius": 1.0})


@pytest.fixture(scope="module")
def hyp_ball():
    return standard_shapes(ModelSpace(-1), "geodesic-ball", {"radius": 1.0})


def heat_center_k0(t, terms=200):
    """Centre value of the heat problem on the coordinate unit disk for L = Laplacian / 4."""
    z = special.jn_zeros(0, terms)
    return 1 - np.sum(2 / (z * special.j1(z)) * np.exp(-(z**2) * t / 4))


# -- grids -------------------------------------------------------------------


def test_coarse_grid(disk):
    g = build_grid(disk, 0.5)
    assert g.size == 9
    assert np.all((g.theta > 0) & (g.theta <= 1))
    assert np.all(disk(g.points) < 0)


def test_halving_h_quadruples_nodes(disk):
    a, b = build_grid(disk, 1 / 16).size, build_grid(disk, 1 / 32).size
    assert 3.5 < b / a < 4.5


def test_grid_resolution_errors():
    sp = ModelSpace(0)
    tiny = standard_shapes(sp, "coordinate-ball", {"radius": 0.1, "center": [0.5, 0.5]})
    with pytest.raises(ResolutionError):
        build_grid(tiny, 1.0)
    two = ImplicitDomain(
        sp,
        lambda x: np.minimum(np.sum((x - [0.5, 0]) ** 2, -1), np.sum((x + [0.5, 0]) ** 2, -1)) - 0.09,
        np.array([[-1.0, 1.0], [-0.5, 0.5]]),
    )
    with pytest.raises(ResolutionError):
        build_grid(two, 0.05)
    with pytest.raises(ArgumentError):
        build_grid(tiny, -0.1)


# -- operator ----------------------------------------------------------------


def test_flat_interior_row(disk):
    h = 1 / 8
    g = build_grid(disk, h)
    A, b = assemble_L(g)
    i = int(np.argmin(np.linalg.norm(g.points, axis=1)))
    row = A.getrow(i).toarray().ravel()
    assert row[i] == pytest.approx(0.25 * -4 / h**2, rel=1e-14)
    nb = np.nonzero(row)[0]
    assert len(nb) == 5
    assert np.allclose(row[nb[nb != i]], 0.25 / h**2, rtol=1e-14)
    assert b[i] == 0


def test_quadratic_is_differentiated_exactly(hyp_ball):
    g = build_grid(hyp_ball, 1 / 32)
    A, b = assemble_L(g)
    away = ~g.near_boundary
    u = g.points[:, 0] ** 2
    Lu = A @ u
    assert np.allclose(Lu[away], 2 * coefficient(g.space, g.points[away]), rtol=1e-10, atol=1e-10)
    rows = np.asarray(A.sum(axis=1)).ravel()
    assert np.abs(rows[away]).max() < 1e-8 * np.abs(A.diagonal()).max()


def test_constant_is_harmonic_including_boundary_load(hyp_ball):
    g = build_grid(hyp_ball, 1 / 32)
    A, b = assemble_L(g)
    r = A @ np.ones(g.size) + b
    assert np.abs(r).max() < 1e-8 * np.abs(A.diagonal()).max()
    assert isinstance(A, sps.csr_matrix)


# -- radial oracle -------------------------------------------------------------


def test_radial_oracle_flat_matches_bessel():
    sp = ModelSpace(0)
    for s in (0.5, 10.0, 200.0):
        prof = radial_oracle(sp, 2.0, s)
        r = np.linspace(0, 1, 11)
        exact = special.i0(2 * np.sqrt(s) * r) / special.i0(2 * np.sqrt(s))
        assert np.abs(prof(r) / exact - 1).max() < 1e-8


def test_radial_oracle_flat_3d_matches_sinh():
    sp = ModelSpace(0, 3)
    s = 10.0
    prof = radial_oracle(sp, 2.0, s)
    r = np.linspace(0.05, 1, 8)
    q = 2 * np.sqrt(s)
    exact = np.sinh(q * r) / (q * r) / (np.sinh(q) / q)
    assert np.abs(prof(r) / exact - 1).max() < 1e-8


def test_radial_oracle_properties(space):
    d = 0.8
    prof = radial_oracle(space, d, 1e-8)
    assert abs(prof.center - 1) < 1e-7
    prof = radial_oracle(space, d, 30.0)
    r = np.linspace(0, float(coordinate_radius(space, d)), 50)
    assert np.all(np.diff(prof(r)) > 0)
    assert prof(r[-1]) == pytest.approx(1.0, abs=1e-14)


# -- elliptic ------------------------------------------------------------------


def test_elliptic_flat_centre_converges_to_bessel(disk):
    s = 10.0
    exact = 1 / special.i0(2 * np.sqrt(s))
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        W = elliptic_solve(build_grid(disk, h), s)
        errs.append(abs(W.interpolate([[0.0, 0.0]])[0] - exact))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 2.8) & (ratios < 5.5))


def test_elliptic_hyperbolic_centre_matches_oracle(hyp_ball):
    s = 10.0
    W = elliptic_solve(build_grid(hyp_ball, 1 / 64), s)
    ref = radial_oracle(hyp_ball.space, 1.0, s).center
    assert abs(W.interpolate([[0.0, 0.0]])[0] / ref - 1) < 5e-3


def test_elliptic_maximum_principle_and_monotonicity(hyp_ball):
    g = build_grid(hyp_ball, 1 / 32)
    op = assemble_L(g)
    prev = None
    for s in (1e-8, 0.1, 1.0, 10.0, 100.0):
        W = elliptic_solve(g, s, operator=op)
        assert np.all(W.values > 0) and np.all(W.values <= 1 + 1e-8)
        if prev is not None:
            assert np.all(W.values <= prev + 1e-12)
        prev = W.values
        if s == 1e-8:
            assert np.abs(W.values - 1).max() < 1e-7


def test_elliptic_clamps_below_floor(disk):
    # the discrete decay per cell is about (s h^2)^-1, so it takes s ~ 1e40 to underflow
    W = elliptic_solve(build_grid(disk, 1 / 16), 1e40)
    assert W.meta["clamped"].any()
    assert W.values.min() >= 1e-300
    with pytest.raises(ArgumentError):
        elliptic_solve(build_grid(disk, 1 / 16), 0.0)


# -- heat ----------------------------------------------------------------------


def test_heat_bounds_and_monotone_in_time(hyp_ball):
    g = build_grid(hyp_ball, 1 / 32)
    tr = heat_solve(g, 0.5, 5e-3, save_every=1)
    U = np.array([f.values for f in tr.fields])
    assert U.min() >= -1e-8 and U.max() <= 1 + 1e-8
    assert np.diff(U, axis=0).min() >= -1e-8


def test_heat_reaches_steady_state(disk):
    tr = heat_solve(build_grid(disk, 1 / 16), 20.0, 0.05, save_every=None)
    assert np.abs(tr.fields[-1].values - 1).max() < 1e-8


def test_heat_centre_matches_series(disk):
    tr = heat_solve(build_grid(disk, 1 / 64), 0.6, 1e-3, save_every=None, probes=[[0.0, 0.0]])
    exact = heat_center_k0(tr.probe_times[-1])
    assert abs(tr.probe_values[-1, 0] / exact - 1) < 1e-3


def test_heat_is_second_order_in_time(disk):
    g = build_grid(disk, 1 / 32)
    v = [heat_solve(g, 0.2, dt, save_every=None, probes=[[0, 0]]).probe_values[-1, 0] for dt in (4e-3, 2e-3, 1e-3)]
    assert 3.0 < (v[0] - v[1]) / (v[1] - v[2]) < 5.0


def test_heat_commutes_with_isometries():
    sp = ModelSpace(-1)
    c = np.array([0.2, 0.1])
    off = standard_shapes(sp, "geodesic-ball", {"radius": 0.6, "center": c})
    cen = standard_shapes(sp, "geodesic-ball", {"radius": 0.6})
    errs = []
    for h in (1 / 32, 1 / 64):
        g_off, g_cen = build_grid(off, h), build_grid(cen, h)
        u_off = heat_solve(g_off, 0.1, 1e-3, save_every=None).fields[-1]
        u_cen = heat_solve(g_cen, 0.1, 1e-3, save_every=None).fields[-1]
        errs.append(np.abs(pullback_field(to_origin(sp, c), u_cen, g_off).values - u_off.values).max())
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] > 2.8


# -- transforms ----------------------------------------------------------------


def test_transform_of_constant_trace_is_one(disk):
    g = build_grid(disk, 1 / 8)
    times = np.linspace(0.01, 2.0, 200)
    fields = [GridField(g, np.ones(g.size)) for _ in times]
    tr = HeatTrace(g, times, fields, meta={"startup_end": 0.01})
    for s in (3.0, 10.0, 100.0):
        assert np.abs(laplace_transform(tr, s).values - 1).max() < 1e-13


def test_heat_transform_matches_elliptic(hyp_ball):
    g = build_grid(hyp_ball, 1 / 64)
    op = assemble_L(g)
    tr = heat_solve(g, 3.0, 1e-3, save_every=10, laplace_s=[1.0, 10.0], operator=op)
    for s in (1.0, 10.0):
        W = elliptic_solve(g, s, operator=op).values
        assert np.abs(tr.transforms[s].values - W).max() / W.max() < 5e-3


def test_offline_transform_reproduces_online_when_every_step_is_stored(disk):
    tr = heat_solve(build_grid(disk, 1 / 16), 2.0, 1e-2, save_every=1, laplace_s=[3.0, 30.0])
    for s in (3.0, 30.0):
        assert np.abs(laplace_transform(tr, s).values - tr.transforms[s].values).max() < 1e-12


def test_transform_truncation_warning(disk):
    tr = heat_solve(build_grid(disk, 1 / 8), 0.1, 0.01)
    with pytest.warns(RuntimeWarning, match="truncation"):
        W = laplace_transform(tr, 1.0)
    assert "warning" in W.meta
    with pytest.raises(ArgumentError):
        laplace_transform(tr, 1.0, mode="fourier")


# -- wave ----------------------------------------------------------------------


def test_wave_cfl_is_enforced(hyp_ball):
    g = build_grid(hyp_ball, 1 / 32)
    dt = stable_wave_step(g)
    with pytest.raises(StabilityError):
        wave_solve(g, 1.0, 1.01 * dt)


def test_wave_taylor_start(hyp_ball):
    g = build_grid(hyp_ball, 1 / 16)
    A, b = assemble_L(g)
    dt = stable_wave_step(g)
    tr = wave_solve(g, dt, dt, save_every=1)
    assert np.allclose(tr.fields[0].values, 0.5 * dt * dt * b)
    assert np.all(tr.fields[0].values[~g.near_boundary] == 0)


def test_wave_finite_speed_and_transform(hyp_ball):
    g = build_grid(hyp_ball, 1 / 64)
    tr = wave_solve(g, 12.0, probes=[[0.0, 0.0]], laplace_s=[4.0])
    early = tr.probe_times < 0.6
    assert np.abs(tr.probe_values[early]).max() < 1e-3
    assert np.abs(tr.probe_values).max() > 0.5
    assert elliptic_residual(tr.transforms[4.0], 4.0) < 5e-2
    assert tr.meta["peak"] < 100


def test_csv_round_trip(tmp_path, disk):
    g = build_grid(disk, 1 / 8)
    f = elliptic_solve(g, 3.0)
    path = tmp_path / "w.csv"
    f.to_csv(path)
    assert path.read_text().splitlines()[0] == "x1,x2,value"
    back = GridField.from_csv(path, g)
    assert np.array_equal(back.values, f.values)
