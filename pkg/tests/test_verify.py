import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from caulklab.errors import SpecError
from caulklab.network import ReluNetworkSpec, enumerate_grid_class
from caulklab.verify import (
    CoveringInstance,
    HolderHead,
    MetricPointSet,
    PolynomialMap,
    VerifySettings,
    affine_adapter,
    bound_consistency_report,
    build_instance,
    check_approximation_bound,
    check_composition_covering,
    check_head_precondition,
    check_quadratic_implication,
    covering_number,
    function_class_metric,
    function_values,
    generate_instance,
    make_head,
    maximal_inequality_bound,
    mc_maximal_inequality,
    quadratic_grid,
    run_verify_suite,
    search_quadratic_implication,
)

GRID = np.linspace(0, 1, 101).reshape(-1, 1)


def line_points(xs):
    xs = np.asarray(xs, dtype=float)
    return MetricPointSet(tuple(xs), np.abs(xs[:, None] - xs[None, :]))


def brute_cover(points: MetricPointSet, delta: float) -> int:
    from itertools import combinations

    k = len(points)
    d = points.distances
    for size in range(1, k + 1):
        for centers in combinations(range(k), size):
            if np.all(d[list(centers)].min(axis=0) <= delta * (1 + 1e-9)):
                return size
    return k


def test_line_covering_examples():
    pts = line_points([0, 1, 2])
    assert covering_number(pts, 0.5).exact_size == 3
    one = covering_number(pts, 1.0)
    assert one.exact_size == 1 and one.centers == (1,)
    assert covering_number(pts, 5.0).exact_size == 1


def test_covering_rejections():
    with pytest.raises(SpecError, match="24"):
        covering_number(line_points(range(30)), 1.0)
    assert covering_number(line_points(range(30)), 1.0, "greedy").greedy_size >= 10
    with pytest.raises(SpecError):
        covering_number(line_points([0, 1]), 0.0)
    with pytest.raises(SpecError, match="triangle"):
        MetricPointSet((0, 1, 2), np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0.0]]))


@given(st.lists(st.floats(0, 10), min_size=1, max_size=9), st.floats(0.05, 5))
def test_exact_cover_matches_brute_force(xs, delta):
    pts = line_points(xs)
    res = covering_number(pts, delta)
    assert res.exact_size == brute_cover(pts, delta)
    assert res.packing_lower_bound <= res.exact_size <= res.greedy_size


@given(st.integers(0, 1000), st.floats(0.05, 1.0))
def test_cover_bounds_in_plane(seed, delta):
    pts = np.random.default_rng(seed).random((12, 2))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    res = covering_number(MetricPointSet(tuple(range(12)), d), delta)
    assert res.packing_lower_bound <= res.exact_size <= res.greedy_size


def test_function_metric_examples():
    consts = [lambda z, c=c: np.full(len(z), c) for c in (0.2, 0.7)]
    m = function_class_metric(consts, GRID)
    assert m.distances[0, 1] == pytest.approx(0.5)
    same = function_class_metric([np.square, np.square], GRID)
    assert same.distances[0, 1] == 0
    lines = function_class_metric([affine_adapter(1.0, 0.0), affine_adapter(0.5, 0.2)], np.array([0.0, 0.5, 1.0]))
    assert lines.distances[0, 1] == pytest.approx(max(0.2, 0.05, 0.3))
    net_class = enumerate_grid_class(ReluNetworkSpec(1, 1, 1, 1, bound=1.0), 1.0)
    assert len(function_class_metric(net_class, GRID)) == 9


def grid_instance(head_name, members, extractor=lambda x: x):
    adapters = tuple(affine_adapter(a, b) for a, b in members)
    return CoveringInstance(adapters, make_head(head_name), extractor, GRID, GRID, head_name)


FIVE = [(0.2 * k, 0.1) for k in range(5)]


def test_covering_identity_head_coincides():
    report = check_composition_covering(grid_instance("identity", FIVE), [0.05 * k for k in range(1, 21)])
    assert report.passed and report.left == report.right


def test_covering_constant_head():
    report = check_composition_covering(grid_instance("constant", FIVE), [0.05, 0.5])
    assert report.left == [1, 1] and report.passed


def test_covering_square_head_five_members():
    members = [(0.1 * k, 0.05) for k in range(5)]
    report = check_composition_covering(grid_instance("square", members), [0.05 * k for k in range(1, 21)])
    assert report.passed and report.probative
    assert report.measured_constant <= 2.0


def test_understated_constant_fails():
    members = [(0.2 * k, 0.0) for k in range(5)]
    report = check_composition_covering(grid_instance("square", [(a * 0.2, 0.8) for a, _ in members]), [0.1, 0.2, 0.3], c_alpha=0.3)
    assert not report.passed and report.counterexample is not None


def test_head_precondition_rejects():
    head = HolderHead(np.square, 1.0, 1.0, (0.0, 1.0), "square-understated")
    with pytest.raises(SpecError, match="measured"):
        check_head_precondition(head, np.linspace(0, 1, 50).reshape(1, -1, 1))
    with pytest.raises(SpecError):
        check_head_precondition(make_head("square"), np.array([[[1.5]]]))


def test_approximation_examples():
    inst = grid_instance("square", FIVE)
    q = np.random.default_rng(0).random((4096, 1))
    inside = check_approximation_bound(inst, PolynomialMap([0.1, 0.4]), q)
    assert inside.left == 0.0 and inside.right == 0.0 and inside.passed
    const = check_approximation_bound(grid_instance("constant", FIVE), PolynomialMap([0.3, 0.3]), q)
    assert const.left == 0.0 and const.passed
    midway = check_approximation_bound(inst, PolynomialMap([0.1, 0.5]), q)
    assert midway.passed and 0 < midway.left <= midway.right


def test_generated_instances():
    a = generate_instance(3, 7, "outside")
    assert a == generate_instance(3, 7, "outside")
    assert len(a["adapters"]) <= 20
    inst, ideal, q = build_instance(a)
    values = function_values(inst.adapters, inst.all_adapter_probes())
    assert values.min() >= 0 and values.max() <= 1
    with pytest.raises(SpecError):
        generate_instance(0, 0, "sideways")


def test_maximal_inequality_examples():
    one = mc_maximal_inequality(1, 1.0, trials=100_000, seed=0)
    assert abs(one.empirical - 1.0) <= 3 * one.std_error
    assert one.bound >= 1 and one.holds
    zero = mc_maximal_inequality(10, 0.0, trials=1000)
    assert zero.empirical == 0.0 and zero.bound >= 0 and zero.holds
    for n in (10, 100, 1000):
        res = mc_maximal_inequality(n, 1.0, trials=20_000, seed=1)
        assert res.holds and 1 < res.ratio < 100
    with pytest.raises(SpecError):
        mc_maximal_inequality(10, 1.0, trials=10)


@given(st.integers(1, 10_000), st.floats(0.01, 10), st.floats(0.01, 10))
def test_maximal_bound_grows_with_n(n, sigma, scale):
    assert maximal_inequality_bound(n + 1, sigma, scale) >= maximal_inequality_bound(n, sigma, scale) - 1e-12


def test_quadratic_examples():
    for a in (0.0, 1.0, 4.0):
        assert check_quadratic_implication(a, 0.0, 2.0, quadratic_grid(a, 0.0, 2.0))
    for b in (0.5, 1.0, 3.0):
        grid = np.concatenate([quadratic_grid(0, b, 0), [b, -b]])
        assert check_quadratic_implication(0.0, b, 0.0, grid)
    assert search_quadratic_implication(500, seed=1).passed


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_quadratic_property(a, b, c):
    assert check_quadratic_implication(a, b, c, quadratic_grid(a, b, c, 401))


def test_consistency_report_examples():
    ns = [64, 128, 256]
    denom = bound_consistency_report(ns, [1, 1, 1], 0.1, 5.0, 0.01).denominators
    unit = bound_consistency_report(ns, denom, 0.1, 5.0, 0.01)
    assert unit.c_hat == pytest.approx([1, 1, 1]) and not unit.diverging
    assert bound_consistency_report(ns, [0, 0, 0], 0.1, 5.0, 0.01).c_hat == [0, 0, 0]
    with pytest.raises(SpecError, match="zero"):
        bound_consistency_report(ns, [1, 1, 1], 0.0, 0.0, 0.0)
    growing = bound_consistency_report([1, 10, 100, 1000], [1e-3, 1e-2, 1e-1, 1.0], 0.0, 1.0, 0.0)
    assert growing.diverging


def test_small_suite_passes_and_broken_bound_fails():
    settings = VerifySettings(instances=3, outside_instances=3, lemma_ns=(1, 10), lemma_trials=2000, quadratic_triples=100, smoke_class_size=30)
    assert run_verify_suite(settings, 0).passed
    broken = VerifySettings(instances=3, outside_instances=0, lemma_ns=(), quadratic_triples=0, c_alpha_scale=0.3, smoke_class_size=30)
    result = run_verify_suite(broken, 0)
    assert not result.passed
    with pytest.raises(SpecError, match="empty"):
        VerifySettings(instances=0, outside_instances=0, lemma_ns=(), quadratic_triples=0)
