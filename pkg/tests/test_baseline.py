import numpy as np
import pytest

from cbopt import (
    Objective,
    finite_diff_gradient,
    grid_search_simplex,
    neg_sharpe,
    projected_gradient,
    simplex,
    simplex_lattice,
    sphere,
)
from cbopt.errors import ConfigurationError


def test_lattice_small_case_in_lexicographic_order():
    pts = simplex_lattice(2, 0.5)
    np.testing.assert_array_equal(pts, [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]])


def test_lattice_counts_match_the_stars_and_bars_formula():
    # C(k + d - 1, d - 1) points for resolution k
    assert len(simplex_lattice(1, 0.1)) == 1
    assert len(simplex_lattice(2, 0.1)) == 11
    assert len(simplex_lattice(3, 0.25)) == 15
    assert len(simplex_lattice(4, 0.2)) == 56


def test_lattice_rows_are_simplex_points_and_sorted():
    pts = simplex_lattice(3, 0.2)
    assert np.all(pts >= 0)
    np.testing.assert_allclose(pts.sum(axis=1), 1.0, atol=1e-12)
    as_tuples = [tuple(row) for row in pts]
    assert as_tuples == sorted(as_tuples)


def test_lattice_validation():
    with pytest.raises(ConfigurationError):
        simplex_lattice(0, 0.5)
    with pytest.raises(ConfigurationError):
        simplex_lattice(2, 0.0)
    with pytest.raises(ConfigurationError):
        simplex_lattice(2, 0.3)  # 1/0.3 is not an integer


def test_grid_search_finds_a_vertex_center():
    best = grid_search_simplex(sphere(np.array([2.0, 0.0])), 2, step=0.25)
    np.testing.assert_array_equal(best.weights, [1.0, 0.0])
    assert best.value == pytest.approx(1.0, abs=1e-12)
    assert best.method == "grid"
    assert best.meta["points"] == 5


def test_grid_search_breaks_ties_lexicographically():
    # constant objective: every lattice point ties; first lexicographic wins
    flat = Objective(lambda w: 1.0, "flat")
    best = grid_search_simplex(flat, 3, step=0.5)
    np.testing.assert_array_equal(best.weights, [0.0, 0.0, 1.0])


def test_grid_search_dimension_guard():
    with pytest.raises(ConfigurationError):
        grid_search_simplex(sphere(np.zeros(5)), 5, step=0.5)


def test_grid_search_worker_count_does_not_change_the_result(market3):
    obj = neg_sharpe(market3)
    a = grid_search_simplex(obj, 3, step=0.01, workers=1)
    b = grid_search_simplex(obj, 3, step=0.01, workers=4)
    assert np.array_equal(a.weights, b.weights)
    assert a.value == b.value


def test_finite_diff_matches_analytic_gradients(market3):
    w = np.array([0.5, 0.25, 0.25])
    obj = sphere(np.array([0.1, 0.1, 0.8]))
    np.testing.assert_allclose(
        finite_diff_gradient(obj, w, 1e-6), obj.grad(w), atol=1e-6
    )
    np.testing.assert_allclose(
        finite_diff_gradient(Objective(lambda x: 3.0, "const"), w), np.zeros(3), atol=0
    )
    sharpe_obj = neg_sharpe(market3)
    np.testing.assert_allclose(
        finite_diff_gradient(sharpe_obj, w, 1e-6), sharpe_obj.grad(w), atol=1e-6
    )
    with pytest.raises(ConfigurationError):
        finite_diff_gradient(obj, w, eps=0.0)


def test_projected_gradient_zero_iters_returns_the_start():
    w0 = np.full(3, 1 / 3)
    ref = projected_gradient(sphere(np.zeros(3)), simplex(3), w0, 0.1, 0)
    np.testing.assert_array_equal(ref.weights, w0)
    assert ref.meta["iters"] == 0


def test_projected_gradient_solves_an_interior_sphere():
    target = np.array([0.5, 0.3, 0.2])
    ref = projected_gradient(sphere(target), simplex(3), np.full(3, 1 / 3), 0.1, 500)
    np.testing.assert_allclose(ref.weights, target, atol=1e-6)
    assert ref.value < 1e-12


def test_projected_gradient_rejects_infeasible_start():
    with pytest.raises(ConfigurationError, match="feasible"):
        projected_gradient(sphere(np.zeros(2)), simplex(2), np.array([0.9, 0.9]), 0.1, 5)


def test_projected_gradient_reports_the_best_iterate_seen():
    # huge step: the path overshoots and oscillates, but the report never
    # gets worse than the starting point
    obj = sphere(np.array([0.5, 0.5]))
    start = np.array([1.0, 0.0])
    ref = projected_gradient(obj, simplex(2), start, 5.0, 40)
    assert ref.value <= obj(start)


def test_projected_gradient_falls_back_to_finite_differences():
    target = np.array([0.6, 0.4])
    gradless = Objective(lambda w: float(((w - target) ** 2).sum()), "gradless")
    assert gradless.grad is None
    ref = projected_gradient(gradless, simplex(2), np.array([0.5, 0.5]), 0.2, 300)
    np.testing.assert_allclose(ref.weights, target, atol=1e-5)


def test_projected_gradient_agrees_with_the_grid_on_the_market(market3):
    obj = neg_sharpe(market3)
    grid = grid_search_simplex(obj, 3, step=0.001)
    pg = projected_gradient(obj, simplex(3), np.full(3, 1 / 3), 1e-3, 2000)
    assert np.max(np.abs(pg.weights - grid.weights)) <= 1e-2
    assert pg.value <= grid.value + 1e-8


def test_reference_metadata_is_flat_text():
    ref = grid_search_simplex(sphere(np.zeros(2)), 2, step=0.5)
    meta = ref.to_metadata()
    assert meta["reference_method"] == "grid"
    assert set(meta) == {
        "reference_method",
        "reference_value",
        "reference_weights",
        "reference_step",
        "reference_points",
    }
    assert all(isinstance(v, str) for v in meta.values())
