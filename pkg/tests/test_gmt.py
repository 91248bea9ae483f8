import logging
import math

import numpy as np
import pytest
import sympy as sp

from carnot_gmt.algebra import builtin
from carnot_gmt.errors import (
    DegenerateRegressionError,
    DomainError,
    PreconditionError,
    StructuralError,
    UsageError,
)
from carnot_gmt.exterior import Multivector, degree_profile
from carnot_gmt.gmt import (
    BlowupTrace,
    Estimator,
    blowup_trace,
    box_dimension,
    charset_covering_experiment,
    charset_dim_bound,
    check_metric,
    hausdorff_set_distance,
    intrinsic_measure,
    linear_fit,
    metric_factor,
    riemannian_measure,
    spherical_hausdorff_premeasure,
    spherical_premeasure_profile,
)
from carnot_gmt.manifold import PointClass, builtin_chart, parameter_grid
from carnot_gmt.metric import box_gauge, covering_number, greedy_5r_cover, make_norm


# ----------------------------------------------------------------------
# Measures
# ----------------------------------------------------------------------

def test_vertical_segment_has_unit_measure(heisenberg):
    chart = builtin_chart("vertical-axis", heisenberg)
    result = intrinsic_measure(heisenberg, chart, resolution=1000)
    assert result.D == 2
    assert result.value == pytest.approx(1.0, rel=1e-12)
    assert result.standard_error is None


def test_horizontal_line_is_invisible_at_degree_two(heisenberg):
    chart = builtin_chart("line", heisenberg)
    assert intrinsic_measure(heisenberg, chart, resolution=500).value == 0.0
    assert intrinsic_measure(heisenberg, chart, D=1, resolution=500).value == pytest.approx(1.0)


def test_unit_disk_by_mask_and_by_polar_chart(abelian2):
    plane = builtin_chart("plane", abelian2)
    masked = intrinsic_measure(abelian2, plane, mask="unit-disk", resolution=400)
    assert masked.value == pytest.approx(math.pi, rel=5e-3)
    polar = intrinsic_measure(abelian2, builtin_chart("disk", abelian2), resolution=400)
    assert polar.value == pytest.approx(math.pi, rel=1e-9)


def test_monte_carlo_is_seeded_and_thread_independent(abelian2):
    plane = builtin_chart("plane", abelian2)
    kwargs = dict(estimator=Estimator.MONTE_CARLO, samples=200_000, seed=7, mask="unit-disk")
    a = intrinsic_measure(abelian2, plane, threads=1, **kwargs)
    b = intrinsic_measure(abelian2, plane, threads=4, **kwargs)
    assert a.value == b.value
    assert a.standard_error == pytest.approx(0.0037, rel=0.1)
    assert abs(a.value - math.pi) < 5 * a.standard_error
    c = intrinsic_measure(abelian2, plane, **dict(kwargs, seed=8))
    assert c.value != a.value


def test_quadrature_is_thread_independent(heisenberg):
    chart = builtin_chart("graph-surface", heisenberg)
    a = intrinsic_measure(heisenberg, chart, resolution=200, threads=1)
    b = intrinsic_measure(heisenberg, chart, resolution=200, threads=3)
    assert a.value == b.value


def test_intrinsic_is_dominated_by_riemannian(heisenberg):
    chart = builtin_chart("graph-surface", heisenberg)
    intrinsic = intrinsic_measure(heisenberg, chart, resolution=100)
    riemannian = riemannian_measure(heisenberg, chart, resolution=100)
    assert 0.0 < intrinsic.value < riemannian.value
    assert riemannian.kind == "riemannian"


def test_riemannian_measure_with_constant_metric(heisenberg):
    line = builtin_chart("line", heisenberg)
    G = np.diag([4.0, 1.0, 1.0])
    assert riemannian_measure(heisenberg, line, metric=G, resolution=100).value == pytest.approx(2.0)
    axis = builtin_chart("vertical-axis", heisenberg)
    assert riemannian_measure(heisenberg, axis, metric=np.eye(3), resolution=100).value == pytest.approx(1.0)


def test_measure_over_a_sub_region(heisenberg):
    chart = builtin_chart("vertical-axis", heisenberg)
    assert intrinsic_measure(heisenberg, chart, region=[[0.25, 0.75]], resolution=100).value == pytest.approx(0.5)
    with pytest.raises(PreconditionError):
        intrinsic_measure(heisenberg, chart, region=[[0.5, 1.5]])


def test_measure_argument_errors(heisenberg):
    chart = builtin_chart("vertical-axis", heisenberg)
    with pytest.raises(DomainError):
        intrinsic_measure(heisenberg, chart, D=3)
    with pytest.raises(UsageError):
        intrinsic_measure(heisenberg, chart, mask="annulus")
    with pytest.raises(StructuralError):
        check_metric(np.eye(2), 3)
    with pytest.raises(DomainError):
        check_metric([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], 3)
    with pytest.raises(DomainError):
        check_metric(np.diag([1.0, -1.0, 1.0]), 3)


# ----------------------------------------------------------------------
# Metric factor and blow-ups
# ----------------------------------------------------------------------

def test_metric_factor_of_the_vertical_direction(heisenberg, h1_norm):
    tau = Multivector(1, heisenberg.degrees, {(2,): 1.0})
    assert metric_factor(heisenberg, h1_norm, tau) == pytest.approx(2.0, abs=0.02)
    scaled = Multivector(1, heisenberg.degrees, {(2,): -2.5})
    assert metric_factor(heisenberg, h1_norm, scaled) == pytest.approx(
        metric_factor(heisenberg, h1_norm, tau), abs=1e-3
    )


@pytest.mark.parametrize("p", [1, 2])
def test_metric_factor_of_coordinate_planes(abelian3, p):
    tau = Multivector(p, abelian3.degrees, {tuple(range(p)): 1.0})
    assert metric_factor(abelian3, make_norm(abelian3), tau) == pytest.approx(2.0 ** p, rel=0.02)


def test_metric_factor_rejects_foreign_multivectors(heisenberg, h1_norm):
    with pytest.raises(StructuralError):
        metric_factor(heisenberg, h1_norm, Multivector(1, (1, 1, 1, 2), {(0,): 1.0}))


def test_hausdorff_set_distance():
    assert hausdorff_set_distance(np.zeros((0, 2)), np.zeros((0, 2))) == 0.0
    assert hausdorff_set_distance(np.zeros((1, 2)), np.zeros((0, 2))) == float("inf")
    assert hausdorff_set_distance([[0.0, 0.0]], [[3.0, 4.0]]) == pytest.approx(5.0)


def test_blowup_of_the_vertical_axis(heisenberg, h1_norm):
    chart = builtin_chart("vertical-axis", heisenberg)
    trace = blowup_trace(heisenberg, h1_norm, chart, [0.5], [0.1, 0.05, 0.02])
    assert trace.D == 2
    assert trace.predicted == pytest.approx(2.0, abs=0.02)
    np.testing.assert_allclose(trace.densities, 2.0, rtol=1e-3)
    np.testing.assert_allclose(trace.distances, 0.0, atol=1e-9)
    assert trace.audit() == []


def test_blowup_of_a_transversal_curve(heisenberg, h1_norm):
    chart = builtin_chart("transversal-curve", heisenberg)
    radii = [0.02, 0.01, 0.005]
    trace = blowup_trace(heisenberg, h1_norm, chart, [0.0], radii)
    assert trace.predicted == pytest.approx(2.0 * math.sqrt(2.0), rel=0.01)
    np.testing.assert_allclose(trace.densities, 2.0 * math.sqrt(2.0), rtol=1e-3)
    assert all(d <= r + 1e-9 for d, r in zip(trace.distances, radii))
    assert trace.audit() == []


def test_blowup_is_invariant_under_reparametrization(heisenberg, h1_norm):
    chart = builtin_chart("reparametrized-curve", heisenberg)
    trace = blowup_trace(heisenberg, h1_norm, chart, [0.0], [0.02, 0.01, 0.005])
    np.testing.assert_allclose(trace.densities, 2.0 * math.sqrt(2.0), rtol=1e-3)
    assert trace.audit() == []


@pytest.mark.slow
def test_blowup_of_a_transversal_curve_over_eight_radii(heisenberg, h1_norm):
    chart = builtin_chart("transversal-curve", heisenberg)
    radii = np.logspace(-1, -3.5, 8)
    trace = blowup_trace(heisenberg, h1_norm, chart, [0.0], radii)
    assert trace.audit() == []


@pytest.mark.slow
def test_blowup_of_a_plane_at_a_transversal_point(heisenberg, h1_norm):
    chart = builtin_chart("plane", heisenberg)
    trace = blowup_trace(heisenberg, h1_norm, chart, [0.5, 0.2], [0.04, 0.02, 0.01])
    gram = math.sqrt(1.0 + 0.25 ** 2 + 0.1 ** 2)
    assert trace.predicted == pytest.approx(16.0 * gram, rel=0.02)
    assert trace.densities[-1] == pytest.approx(trace.predicted, rel=0.03)
    assert trace.distances[-1] < 0.1


def test_blowup_preconditions(heisenberg, h1_norm):
    axis = builtin_chart("vertical-axis", heisenberg)
    with pytest.raises(PreconditionError):
        blowup_trace(heisenberg, h1_norm, builtin_chart("line", heisenberg), [0.5], [0.1, 0.05])
    with pytest.raises(PreconditionError):
        blowup_trace(heisenberg, h1_norm, axis, [0.5], [0.05, 0.1])
    with pytest.raises(DomainError):
        blowup_trace(heisenberg, h1_norm, axis, [0.5], [0.1, -0.05])
    with pytest.raises(PreconditionError):
        blowup_trace(heisenberg, h1_norm, axis, [2.0], [0.1, 0.05])


def test_blowup_audit_reports_failures():
    trace = BlowupTrace(
        t0=(0.0,), x=(0.0, 0.0, 0.0), D=2,
        radii=[0.1, 0.05, 0.02],
        densities=[1.0, 1.5, 2.0],
        distances=[0.01, 0.2, 0.3],
        predicted=2.0, metric_factor=2.0,
    )
    failures = trace.audit()
    assert any("spread" in f for f in failures)
    assert any("grew" in f for f in failures)
    assert any("final Hausdorff" in f for f in failures)
    assert not any("misses predicted" in f for f in failures)


# ----------------------------------------------------------------------
# Dimension
# ----------------------------------------------------------------------

def test_linear_fit_of_an_exact_line():
    x = np.arange(6, dtype=float)
    slope, intercept, stderr, r2, rms = linear_fit(x, 2.0 * x - 1.0)
    assert slope == pytest.approx(2.0)
    assert intercept == pytest.approx(-1.0)
    assert stderr == pytest.approx(0.0, abs=1e-12)
    assert r2 == pytest.approx(1.0)
    assert rms == pytest.approx(0.0, abs=1e-12)


def test_dimension_of_a_horizontal_segment(abelian2):
    chart = builtin_chart("segment", abelian2)
    points = chart.evaluate(parameter_grid(chart.domain, 20001))
    estimate = box_dimension(make_norm(abelian2), points, np.logspace(-1, -3, 8))
    assert estimate.slope == pytest.approx(1.0, abs=0.1)
    assert estimate.r2 > 0.99
    assert estimate.counts == sorted(estimate.counts)


@pytest.mark.slow
def test_dimension_of_the_vertical_axis(heisenberg, h1_norm):
    chart = builtin_chart("vertical-axis", heisenberg)
    points = chart.evaluate(parameter_grid(chart.domain, 200001))
    estimate = box_dimension(h1_norm, points, np.logspace(-0.7, -2.5, 8), threads=2)
    assert estimate.slope == pytest.approx(2.0, abs=0.15)


@pytest.mark.slow
def test_dimension_of_a_transversal_curve(heisenberg, h1_norm):
    chart = builtin_chart("transversal-curve", heisenberg)
    points = chart.evaluate(parameter_grid(chart.domain, 200001))
    estimate = box_dimension(h1_norm, points, np.logspace(-0.7, -2.5, 8), threads=2)
    assert 1.85 <= estimate.slope <= 2.15


def test_dimension_is_thread_independent(h1_norm, rng):
    points = rng.uniform(-1, 1, size=(2000, 3))
    scales = np.logspace(-0.3, -1.5, 5)
    assert box_dimension(h1_norm, points, scales).counts == box_dimension(h1_norm, points, scales, threads=3).counts


def test_dimension_regression_errors(h1_norm):
    points = np.zeros((10, 3))
    with pytest.raises(DegenerateRegressionError):
        box_dimension(h1_norm, points, [0.1, 0.01, 0.001])
    with pytest.raises(DegenerateRegressionError):
        box_dimension(h1_norm, points, [0.1] * 4)
    with pytest.raises(DegenerateRegressionError):
        box_dimension(h1_norm, np.zeros((0, 3)), np.logspace(-1, -3, 4))
    with pytest.raises(DomainError):
        box_dimension(h1_norm, points, [0.1, 0.01, -0.001, 0.0001])


def test_narrow_scale_range_warns(h1_norm, caplog):
    points = np.random.default_rng(0).uniform(-1, 1, size=(200, 3))
    with caplog.at_level(logging.WARNING, logger="carnot_gmt"):
        box_dimension(h1_norm, points, np.logspace(-0.5, -1.5, 4))
    assert "decades" in caplog.text


# ----------------------------------------------------------------------
# Characteristic set
# ----------------------------------------------------------------------

@pytest.mark.parametrize(
    "group, p, lam, expected",
    [
        ("heisenberg:1", 1, 1, sp.Integer(1)),
        ("heisenberg:1", 1, "1/2", sp.Rational(4, 3)),
        ("heisenberg:1", 2, 1, sp.Integer(2)),
        ("heisenberg:1", 2, "1/2", sp.Rational(5, 2)),
        ("engel", 1, "1/4", sp.Rational(12, 5)),
        ("engel", 1, "1/2", sp.Integer(2)),
    ],
)
def test_charset_dim_bound(group, p, lam, expected):
    bound = charset_dim_bound(degree_profile(builtin(group), p), lam)
    assert bound.value == expected
    assert bound.value < bound.D


def test_charset_bound_reference_and_classes(heisenberg):
    bound = charset_dim_bound(degree_profile(heisenberg, 2), 1)
    assert bound.reference_bound == bound.value == 2
    assert bound.class_b_bound is None
    h1 = charset_dim_bound(degree_profile(heisenberg, 1), 0.5)
    assert h1.lam == sp.Rational(1, 2)
    assert (h1.class_a_bound, h1.class_b_bound) == (1, sp.Rational(4, 3))
    assert h1.to_dict()["bound"] == "4/3"


def test_charset_bound_decreases_in_lambda(engel):
    profile = degree_profile(engel, 2)
    values = [charset_dim_bound(profile, sp.Rational(k, 10)).value for k in range(1, 11)]
    assert all(a >= b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("lam", [0, -1, "3/2"])
def test_charset_bound_rejects_bad_lambda(heisenberg, lam):
    with pytest.raises(DomainError):
        charset_dim_bound(degree_profile(heisenberg, 1), lam)


def test_class_a_covering_experiment(heisenberg, h1_norm):
    chart = builtin_chart("graph-surface", heisenberg)
    exp = charset_covering_experiment(heisenberg, h1_norm, chart, 0.5, 0.05, PointClass.A, resolution=21)
    assert not exp.empty
    assert exp.params == [(0.0, 0.0)]
    assert exp.theta == pytest.approx(1.0)
    assert exp.radius == pytest.approx(0.05)
    assert exp.ceilings == [pytest.approx(10.0)]
    assert 1 <= exp.max_count <= 50


def test_class_b_covering_experiment(heisenberg, h1_norm):
    chart = builtin_chart("line", heisenberg)
    exp = charset_covering_experiment(
        heisenberg, h1_norm, chart, 0.5, 0.01, PointClass.B, resolution=11, max_points=5
    )
    assert len(exp.params) == 5
    assert exp.counts == [1] * 5
    assert exp.radius == pytest.approx(math.sqrt(0.005))
    assert exp.max_ratio == pytest.approx(1.0, rel=1e-9)


def test_covering_experiment_edge_cases(heisenberg, h1_norm):
    surface = builtin_chart("graph-surface", heisenberg)
    empty_b = charset_covering_experiment(heisenberg, h1_norm, surface, 0.5, 0.05, PointClass.B)
    assert empty_b.empty and "l = 1" in empty_b.message
    axis = builtin_chart("vertical-axis", heisenberg)
    none = charset_covering_experiment(heisenberg, h1_norm, axis, 0.5, 0.01, PointClass.B, resolution=11)
    assert none.empty and "no class-B" in none.message
    with pytest.raises(PreconditionError):
        charset_covering_experiment(heisenberg, h1_norm, surface, 0.1, 0.5, PointClass.A)
    with pytest.raises(DomainError):
        charset_covering_experiment(heisenberg, h1_norm, surface, 1.5, 0.05, PointClass.A)
    with pytest.raises(UsageError):
        charset_covering_experiment(heisenberg, h1_norm, surface, 0.5, 0.05, PointClass.TRANSVERSAL)


def test_spherical_premeasure_of_a_segment(abelian2):
    norm = make_norm(abelian2)
    chart = builtin_chart("segment", abelian2)
    points = chart.evaluate(parameter_grid(chart.domain, 20001))
    value = spherical_hausdorff_premeasure(norm, points, 1.0, 0.01)
    assert 1.0 <= value <= 3.0
    assert spherical_hausdorff_premeasure(norm, np.zeros((0, 2)), 1.0, 0.01) == 0.0
    with pytest.raises(DomainError):
        spherical_hausdorff_premeasure(norm, points, -1.0, 0.01)
    with pytest.raises(DomainError):
        spherical_hausdorff_premeasure(norm, points, 1.0, 0.0)


def short_vertical_segment(alg, length=0.01, resolution=200001):
    t = np.linspace(0.0, length, resolution)
    points = np.zeros((resolution, alg.n))
    points[:, -1] = t
    return points


PREMEASURE_DELTAS = np.logspace(np.log10(0.2), np.log10(0.002), 5)


def test_spherical_premeasure_of_a_vertical_segment(heisenberg, h1_norm):
    points = short_vertical_segment(heisenberg)
    at_dimension = [spherical_hausdorff_premeasure(h1_norm, points, 2.0, d) for d in PREMEASURE_DELTAS]
    assert all(0.02 <= v <= 0.2 for v in at_dimension)
    assert max(at_dimension) / min(at_dimension) < 3.0
    assert at_dimension[-1] == pytest.approx(0.04, rel=0.1)

    above = [spherical_hausdorff_premeasure(h1_norm, points, 2.5, d) for d in PREMEASURE_DELTAS]
    assert np.all(np.diff(above) < 0)
    assert above[-1] < above[0] / 5


@pytest.mark.slow
@pytest.mark.parametrize("name", ["vertical-axis", "transversal-curve", "reparametrized-curve"])
def test_spherical_premeasure_is_comparable_to_intrinsic_measure(heisenberg, h1_norm, name):
    chart = builtin_chart(name, heisenberg)
    region = [[0.0, 0.01]]
    points = chart.evaluate(parameter_grid(np.asarray(region), 200001))
    mu = intrinsic_measure(heisenberg, chart, region=region, resolution=1000).value
    ratios = [spherical_hausdorff_premeasure(h1_norm, points, 2.0, d) / mu for d in PREMEASURE_DELTAS]
    assert all(1.0 <= ratio <= 10.0 for ratio in ratios)
    assert max(ratios) / min(ratios) < 3.0


def test_spherical_premeasure_profile(heisenberg, h1_norm):
    chart = builtin_chart("vertical-axis", heisenberg)
    points = chart.evaluate(parameter_grid(chart.domain, 20001))
    deltas = [0.4, 0.3, 0.2, 0.15, 0.1]
    raw = [spherical_hausdorff_premeasure(h1_norm, points, 2.0, d) for d in deltas]
    profile = spherical_premeasure_profile(h1_norm, points, 2.0, deltas)
    assert np.all(np.diff(profile) >= 0)
    assert all(p <= v for p, v in zip(profile, raw))
    assert profile[-1] == raw[-1]
    shuffled = spherical_premeasure_profile(h1_norm, points, 2.0, deltas[::-1])
    assert shuffled == profile[::-1]
    with pytest.raises(UsageError):
        spherical_premeasure_profile(h1_norm, points, 2.0, [])


def test_covering_number_shrinks_as_the_scale_doubles(h1_norm, rng):
    points = rng.uniform(-1, 1, size=(5000, 3))
    counts = [covering_number(h1_norm, points, r) for r in (0.05, 0.1, 0.2, 0.4, 0.8)]
    assert counts == sorted(counts, reverse=True)
    assert counts[0] > counts[-1]


@pytest.mark.slow
def test_covering_number_of_a_uniform_ball_scales_like_r_to_the_minus_four(heisenberg, h1_norm, rng):
    # count only centers in an inner box, away from the edges of the sample
    points = rng.uniform(-1, 1, size=(300000, 3)) * np.array([2.0, 2.0, 4.0])
    radii = np.logspace(np.log10(0.35), np.log10(0.14), 4)
    counts = []
    for r in radii:
        centers = greedy_5r_cover(h1_norm, points, r).centers
        counts.append(int(np.sum(box_gauge(heisenberg, centers) < 1.25)))
    slope = np.polyfit(np.log(radii), np.log(counts), 1)[0]
    assert slope == pytest.approx(-4.0, abs=0.25)
