import numpy as np
import pytest
from scipy import special

from isothermic.balance import (
    IsometryDifference,
    MeanSeries,
    balance_law_check,
    isometry_pair,
    mean_series,
    ode_residual_Q,
    ode_residual_U,
    sphere_area,
)
from isothermic.domain import standard_shapes
from isothermic.errors import ArgumentError, CoverageError, PreconditionError
from isothermic.modelspace import ModelSpace, coordinate_radius, geodesic_distance
from isothermic.pde import build_grid, heat_solve


class Analytic:
    """Closed-form source ``f(t, x)`` on the geodesic ball of radius ``reach_``."""

    def __init__(self, space, f, times, reach=1.0, sup=1.0):
        self.space, self.f, self.times, self.reach_, self.sup_ = space, f, np.asarray(times, float), reach, sup

    def evaluate(self, t, points):
        return self.f(t, np.atleast_2d(points))

    def reach(self, center):
        return self.reach_

    def sup(self, t):
        return self.sup_


def synthetic_series(space, U=None, Q=None, nt=7, nr=9):
    times = np.linspace(0.1, 0.4, nt)
    radii = np.linspace(0.1, 0.5, nr)
    r = np.asarray(coordinate_radius(space, radii))
    U = np.zeros((nt, nr)) if U is None else U(times[:, None], r[None, :])
    Q = np.zeros((nt, nr, space.n)) if Q is None else Q(times[:, None, None], r[None, :, None])
    return MeanSeries(space, np.zeros(space.n), radii, r, times, U, Q)


def test_sphere_area():
    assert sphere_area(2) == pytest.approx(2 * np.pi)
    assert sphere_area(3) == pytest.approx(4 * np.pi)


def test_means_of_constant_and_radial_fields(space):
    times = [0.1, 0.2]
    const = mean_series(Analytic(space, lambda t, x: np.full(len(x), 3.0), times), np.zeros(2), [0.2, 0.5])
    assert np.allclose(const.U, 3.0 * 2 * np.pi, rtol=1e-14)
    assert np.abs(const.Q).max() < 1e-13
    radial = Analytic(space, lambda t, x: t * np.cos(np.sum(x * x, axis=1)), times)
    s = mean_series(radial, np.zeros(2), [0.2, 0.5])
    r = s.coord_radii
    assert np.allclose(s.U, 2 * np.pi * np.array(times)[:, None] * np.cos(r**2)[None, :], rtol=1e-13)
    assert np.abs(s.Q).max() < 1e-13


def test_moment_of_linear_field():
    sp = ModelSpace(-1)
    s = mean_series(Analytic(sp, lambda t, x: x[:, 0], [0.1]), np.zeros(2), [0.3, 0.6])
    assert np.allclose(s.Q[0, :, 0], np.pi * s.coord_radii, rtol=1e-13)
    assert np.abs(s.Q[0, :, 1]).max() < 1e-14
    assert np.abs(s.U).max() < 1e-14


def test_means_about_offcentre_point_use_geodesic_spheres(space):
    c = np.array([0.2, -0.1])
    seen = []

    def f(t, x):
        seen.append(geodesic_distance(space, c, x))
        return np.ones(len(x))

    mean_series(Analytic(space, f, [0.1]), c, [0.25, 0.5])
    d = seen[0].reshape(2, -1)
    assert np.abs(d - np.array([[0.25], [0.5]])).max() < 1e-12


def test_mean_series_coverage_error():
    sp = ModelSpace(0)
    with pytest.raises(CoverageError) as err:
        mean_series(Analytic(sp, lambda t, x: np.ones(len(x)), [0.1], reach=0.5), np.zeros(2), [0.2, 0.6])
    assert err.value.offending.tolist() == [0.6]


def test_residuals_vanish_for_trivial_series(space):
    assert ode_residual_U(synthetic_series(space, U=lambda t, r: 5.0 + 0 * t * r)) == 0.0
    assert ode_residual_Q(synthetic_series(space)) == 0.0


def test_residual_of_non_solution_is_bounded_away(space):
    k, n = space.k, 2
    s = synthetic_series(space, U=lambda t, r: r + 0 * t)
    r = s.coord_radii[2:-2]
    assert ode_residual_U(s) == pytest.approx(np.max((n - 1) * (k * k * r**4 + 2 * k * r**2 + 1)), rel=1e-10)


def test_static_linear_moment_in_both_forms(space):
    k, n = space.k, 2
    e = np.array([0.6, 0.8])
    s = synthetic_series(space, Q=lambda t, r: r * e + 0 * t)
    assert ode_residual_Q(s, form="derived") < 1e-12
    r = s.coord_radii[2:-2]
    expected = np.max((n - 1) * np.abs(k * k * r**5 + 2 * k * r**3)) * e.max()
    assert ode_residual_Q(s, form="printed") == pytest.approx(expected, rel=1e-9, abs=1e-14)
    with pytest.raises(ArgumentError):
        ode_residual_Q(s, form="guessed")


def test_residual_needs_five_samples():
    with pytest.raises(ArgumentError):
        ode_residual_U(synthetic_series(ModelSpace(0), nt=4))


def test_csv_round_trip(tmp_path):
    sp = ModelSpace(-1)
    s = synthetic_series(sp, U=lambda t, r: np.exp(-t) * r, Q=lambda t, r: t * r * np.array([1.0, -2.0]))
    s.meta["note"] = "x"
    path = tmp_path / "means.csv"
    s.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ") and lines[1] == "t,r,U,Q_1,Q_2"
    back = MeanSeries.from_csv(path)
    assert np.array_equal(back.U, s.U) and np.array_equal(back.Q, s.Q)
    assert np.array_equal(back.times, s.times) and np.allclose(back.coord_radii, s.coord_radii)
    assert back.meta["note"] == "x"


def flat_ball_mean_oracle(t, r_coord, a=0.5, terms=200):
    """Heat solution on the coordinate disk of radius ``a`` for L = Laplacian / 4."""
    z = special.jn_zeros(0, terms)
    return 1 - np.sum(2 / (z * special.j1(z)) * special.j0(z * r_coord / a) * np.exp(-(z**2) * t / (4 * a * a)))


@pytest.fixture(scope="module")
def flat_traces():
    sp = ModelSpace(0)
    dom = standard_shapes(sp, "geodesic-ball", {"radius": 1.0})
    out = {}
    for h, dt in ((1 / 16, 8e-3), (1 / 32, 4e-3)):
        out[h] = heat_solve(build_grid(dom, h), 0.3, dt, save_every=1)
    return out


def test_means_of_ball_heat_solution_match_series(flat_traces):
    tr = flat_traces[1 / 32]
    s = mean_series(tr, np.zeros(2), [0.3, 0.6], times=[0.1, 0.2, 0.3])
    for i, t in enumerate(s.times):
        for j, r in enumerate(s.coord_radii):
            assert s.U[i, j] / (2 * np.pi) == pytest.approx(flat_ball_mean_oracle(t, r), abs=1e-3)


def test_mean_equation_residual_converges(flat_traces):
    # h, dt and the sample spacing in t are refined together
    res = []
    for h, tr in flat_traces.items():
        s = mean_series(tr, np.zeros(2), np.linspace(0.1, 0.7, 7), times=tr.times[tr.times >= 0.05 - 1e-12])
        res.append(ode_residual_U(s))
    assert 2.8 < res[0] / res[1] < 5.5


def test_isometry_pair_geometry(space):
    c = np.array([0.1, 0.05])
    p1, p2 = isometry_pair(space, c, 0.3, [0.6, 0.8])
    a, b = p1(np.zeros(2)), p2(np.zeros(2))
    assert geodesic_distance(space, c, a) == pytest.approx(0.3, abs=1e-12)
    assert geodesic_distance(space, c, b) == pytest.approx(0.3, abs=1e-12)
    assert geodesic_distance(space, a, b) == pytest.approx(0.6, abs=1e-12)
    q1, q2 = isometry_pair(space, c, 0.3, mode="reflected")
    assert np.allclose(q1(np.zeros(2)), q2(np.zeros(2)), atol=1e-14)
    with pytest.raises(ArgumentError):
        isometry_pair(space, c, 0.3, mode="sideways")


def test_balance_antipodal_pair_on_ball():
    sp = ModelSpace(-1)
    c = np.array([0.13, 0.07])
    dom = standard_shapes(sp, "geodesic-ball", {"radius": 1.0, "center": c})
    tr = heat_solve(build_grid(dom, 1 / 64), 0.3, 2e-3, save_every=10)
    v = IsometryDifference(tr, *isometry_pair(sp, c, 0.4, [0.765, 0.644]))
    radii = np.linspace(0.1, 0.8, 8) * v.reach(np.zeros(2))
    for direction in ("center->means", "means->center"):
        for moment in (False, True):
            rep = balance_law_check(v, np.zeros(2), radii, tr.times[1:], direction=direction, moment=moment)
            assert rep.status == "pass", (direction, moment, rep)


def test_balance_zero_field_passes():
    sp = ModelSpace(0)
    dom = standard_shapes(sp, "geodesic-ball", {"radius": 1.0})
    tr = heat_solve(build_grid(dom, 1 / 16), 0.1, 1e-2, save_every=1)
    p1, _ = isometry_pair(sp, np.zeros(2), 0.3)
    rep = balance_law_check(IsometryDifference(tr, p1, p1), np.zeros(2), [0.1, 0.2, 0.3])
    assert rep.passed and rep.center_sup == 0 and rep.means_sup == 0


def test_balance_ellipse_generic_centre_is_not_applicable():
    sp = ModelSpace(0)
    dom = standard_shapes(sp, "ellipse", {"a": 1.0, "b": 0.6})
    tr = heat_solve(build_grid(dom, 1 / 32), 0.3, 5e-3, save_every=4)
    c = np.array([0.3, 0.1])
    radii = np.linspace(0.05, 0.3, 6)
    rep = balance_law_check(tr, c, radii, tr.times[1:], residual_tol=None)
    assert rep.status == "not-applicable" and not rep.hypothesis_holds
    assert rep.means_sup > 5e-3


def test_balance_rejects_non_solutions():
    sp = ModelSpace(0)
    times = np.linspace(0.1, 0.5, 9)
    bad = Analytic(sp, lambda t, x: t * x[:, 0] ** 2, times)  # v_t = x1^2 but L v = t / 2
    with pytest.raises(PreconditionError):
        balance_law_check(bad, np.zeros(2), np.linspace(0.1, 0.5, 7), direction="means->center")
    with pytest.raises(ArgumentError):
        balance_law_check(bad, np.zeros(2), [0.1], direction="sideways")
