import json
import math

import numpy as np
import pytest

from isothermic.asympt import closed_form_ladder, geometric_s
from isothermic.domain import BoundarySample, parallel_surface, sample_boundary, standard_shapes
from isothermic.errors import ArgumentError, HypothesisViolation, IncompleteInputError, PreconditionError
from isothermic.modelspace import ModelSpace
from isothermic.pde import GridField, HeatTrace, build_grid
from isothermic.rigidity import (
    SCHEMA_VERSION,
    ProductResult,
    RFit,
    RigidityReport,
    StationarityResult,
    Thresholds,
    curvature_product,
    default_ladder,
    extract_R,
    run_rigidity,
    stationarity_check,
    verdict,
)


def exp_ladder(F_of_points, s_values):
    return closed_form_ladder(
        lambda s: (lambda p: np.exp(-math.sqrt(s) * F_of_points(p))),
        s_values,
        log_func_of_s=lambda s: (lambda p: -math.sqrt(s) * F_of_points(p)),
    )


def stat(score):
    return StationarityResult(score, [1.0], [0.5], [0.0], [True])


def rfit(R):
    return RFit(R, 0.0, [1.0], [0.0], [R], [0.0], [0], 0.0)


def prods(spread):
    return ProductResult(0.3, 3.3, [[0, 0]], [[1.0]], [2.3], spread)


# -- distance recovery ---------------------------------------------------------


def test_extract_R_exact_for_pure_exponential():
    pts = np.array([[0.1, 0.0], [0.0, 0.1], [-0.1, 0.0]])
    fit = extract_R(exp_ladder(lambda p: np.full(len(p), 0.37), geometric_s(16, 4)), pts)
    assert fit.R == pytest.approx(0.37, abs=1e-13)
    assert max(fit.spread) < 1e-14 and fit.warning is None


def test_extract_R_weighted_mean_and_warning():
    sp = ModelSpace(0)
    dom = standard_shapes(sp, "ellipse", {"a": 1.0, "b": 0.6})
    surf = parallel_surface(dom, 0.3, 32)
    # W varies along the surface: A(s) is dominated by the nearest points
    lad = exp_ladder(lambda p: 0.3 + 0.2 * p[:, 0] ** 2, geometric_s(64, 4))
    with pytest.warns(RuntimeWarning, match="non-stationary"):
        fit = extract_R(lad, surf)
    assert fit.warning is not None and max(fit.spread) > 0.1
    # the limit is the smallest exponent on the surface
    assert abs(fit.R - (0.3 + 0.2 * np.min(surf.points[:, 0] ** 2))) < 0.05


def test_extract_R_needs_three_unclamped_entries():
    lad = exp_ladder(lambda p: np.full(len(p), 1.0), [1e2, 1e6, 4e6])
    with pytest.raises(PreconditionError):
        extract_R(lad, np.zeros((1, 2)))


def test_default_ladder():
    s = default_ladder(1 / 128)
    assert len(s) == 4 and np.allclose(np.diff(np.log2(s)), 1.0)
    assert math.sqrt(s[-1]) / 128 == pytest.approx(1 / 8)


# -- stationarity --------------------------------------------------------------


@pytest.fixture(scope="module")
def disk_grid():
    return build_grid(standard_shapes(ModelSpace(0), "coordinate-ball", {"radius": 1.0}), 1 / 16)


def synthetic_trace(grid, f, times):
    fields = [GridField(grid, f(t, grid.points)) for t in times]
    return HeatTrace(grid, np.asarray(times), fields)


def test_stationarity_on_radial_and_non_radial_fields(disk_grid):
    surf = parallel_surface(disk_grid.domain, 0.6, 32)  # coordinate circle of radius 0.7
    times = [0.1, 0.2, 0.3]
    radial = synthetic_trace(disk_grid, lambda t, x: t + np.sum(x * x, axis=1), times)
    res = stationarity_check(radial, surf)
    assert res.score < 1e-3 and not res.degenerate
    tilted = synthetic_trace(disk_grid, lambda t, x: t + np.sum(x * x, axis=1) + 0.1 * x[:, 0], times)
    assert stationarity_check(tilted, surf).score > 0.05


def test_stationarity_a_min_and_degenerate_cases(disk_grid):
    surf = parallel_surface(disk_grid.domain, 0.6, 32)
    small = synthetic_trace(disk_grid, lambda t, x: np.full(len(x), 1e-3 * t), [0.1, 0.2])
    with pytest.raises(PreconditionError, match="a_min"):
        stationarity_check(small, surf)
    res = stationarity_check(small, surf, a_min=0.0)
    assert res.score < 1e-12 and all(res.used)
    single = BoundarySample(surf.points[:1], surf.normals[:1], surf.weights[:1], surf.parameters[:1])
    assert stationarity_check(small, single).degenerate


def test_stationarity_rejects_surfaces_off_the_interior(disk_grid):
    bs = sample_boundary(disk_grid.domain, 16)
    tr = synthetic_trace(disk_grid, lambda t, x: np.ones(len(x)), [0.1])
    outside = BoundarySample(1.02 * bs.points, bs.normals, bs.weights, bs.parameters)
    with pytest.raises(PreconditionError, match="boundary"):
        stationarity_check(tr, outside)


# -- curvature products ----------------------------------------------------------


def test_curvature_product_of_ball_is_constant():
    sp = ModelSpace(0)
    dom = standard_shapes(sp, "coordinate-ball", {"radius": 1.0})
    res = curvature_product(sp, dom, 1.5, sample_boundary(dom, 32))
    assert res.tau == pytest.approx(2 / 3)
    assert np.allclose(res.products, 1 / 6, rtol=1e-8)
    assert res.spread < 1e-8


def test_curvature_product_hypothesis_violation():
    sp = ModelSpace(0)
    dom = standard_shapes(sp, "coordinate-ball", {"radius": 1.0})
    with pytest.raises(HypothesisViolation) as err:
        curvature_product(sp, dom, 2.5, sample_boundary(dom, 8))
    assert err.value.point is not None
    with pytest.raises(ArgumentError):
        curvature_product(sp, dom, 0.0, sample_boundary(dom, 8))


def test_curvature_product_varies_on_ellipse():
    sp = ModelSpace(0)
    dom = standard_shapes(sp, "ellipse", {"a": 1.0, "b": 0.6})
    assert curvature_product(sp, dom, 0.3, sample_boundary(dom, 64)).spread > 0.2


# -- verdicts --------------------------------------------------------------------


def test_verdict_rules():
    th = Thresholds()
    assert verdict(stat(1e-3), rfit(0.3), 0.3, prods(1e-3), th).verdict == "consistent-with-geodesic-ball"
    assert verdict(stat(7e-3), rfit(0.3), 0.3, prods(1e-3), th).verdict == "inconclusive"
    assert verdict(stat(1e-3), rfit(0.3), 0.3, prods(0.2), th).verdict == "rejected"
    assert verdict(stat(1e-3), rfit(0.34), 0.3, prods(1e-3), th).verdict == "rejected"
    hv = HypothesisViolation("curvature too large", point=np.zeros(2))
    rep = verdict(stat(1e-3), rfit(0.3), 0.3, hv, th)
    assert rep.verdict == "rejected" and "curvature" in rep.hypothesis
    with pytest.raises(IncompleteInputError, match="R_fit"):
        verdict(stat(1e-3), None, 0.3, prods(1e-3), th)


def test_report_json_round_trip_and_recompute():
    rep = verdict(stat(7e-3), rfit(0.3), 0.3, prods(1e-3), meta={"note": "synthetic"})
    back = RigidityReport.from_json(rep.to_json())
    assert back.verdict == rep.verdict == back.recompute()
    assert back.schema_version == SCHEMA_VERSION and back.meta["note"] == "synthetic"
    d = json.loads(rep.to_json())
    d["checks"]["stationarity"] = 1.0
    assert RigidityReport.from_json(json.dumps(d)).recompute() == "rejected"
    d["schema_version"] = "0.1"
    with pytest.raises(ArgumentError):
        RigidityReport.from_json(json.dumps(d))


# -- end to end ------------------------------------------------------------------


def test_run_rigidity_ball_is_consistent(space):
    dom = standard_shapes(space, "geodesic-ball", {"radius": 1.0, "center": [0.1, 0.05]})
    rep = run_rigidity(space, dom, h=1 / 64, dt=2e-3)
    assert rep.verdict == "consistent-with-geodesic-ball", rep.checks
    assert rep.R_true == pytest.approx(0.3)


def test_run_rigidity_ellipse_is_rejected():
    sp = ModelSpace(0)
    dom = standard_shapes(sp, "ellipse", {"a": 1.0, "b": 0.6})
    rep = run_rigidity(sp, dom, h=1 / 32, dt=2e-3)
    assert rep.verdict == "rejected"
    assert rep.checks["spread"] > 0.2 and rep.checks["stationarity"] > 2 * rep.thresholds["tau_s"]
