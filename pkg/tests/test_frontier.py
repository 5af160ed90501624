"""Tests for Pareto frontier extraction, dominance and hypervolume."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hypervolume_monte_carlo, pareto_front_quadratic
from stagelab import (
    ConfigError,
    FrontierPoint,
    ParetoFrontier,
    dominates,
    hypervolume,
    pareto_front,
    points_from_records,
)


def make_points(*coords, ids=None):
    ids = ids or [f"p{i}" for i in range(len(coords))]
    return [FrontierPoint(x=float(x), y=float(y), run_id=r) for (x, y), r in zip(coords, ids)]


def test_front_of_a_single_point():
    front = pareto_front(make_points((1, 2)))
    assert len(front) == 1
    assert front.points[0] == FrontierPoint(1.0, 2.0, "p0")


def test_front_drops_weakly_dominated_points():
    front = pareto_front(make_points((1, 3), (2, 2), (3, 1), (2, 3)))
    assert [(p.x, p.y) for p in front] == [(1, 3), (2, 2), (3, 1)]


def test_duplicate_coordinates_keep_the_smallest_run_id():
    points = make_points((1, 1), (1, 1), (2, 0.5), ids=["b", "a", "z"])
    front = pareto_front(points)
    assert [(p.x, p.y, p.run_id) for p in front] == [(1, 1, "a"), (2, 0.5, "z")]


def test_front_extraction_is_idempotent():
    front = pareto_front(make_points((0, 5), (1, 3), (1.5, 3), (4, 0)))
    again = pareto_front(front.points)
    assert again.points == front.points


coordinate = st.integers(min_value=0, max_value=12).map(lambda k: k / 2.0)


@given(
    coords=st.lists(st.tuples(coordinate, coordinate), min_size=1, max_size=25),
    extra=st.tuples(coordinate, coordinate),
)
@settings(max_examples=200, deadline=None)
def test_adding_a_point_never_grows_the_front_beyond_it(coords, extra):
    points = make_points(*coords)
    q = FrontierPoint(x=float(extra[0]), y=float(extra[1]), run_id="q")
    before = set(pareto_front(points).points)
    after = set(pareto_front(points + [q]).points)
    assert after <= before | {q}


def test_front_matches_the_quadratic_oracle_on_seeded_batches():
    for case in range(100):
        rng = np.random.default_rng(1000 + case)
        m = int(rng.integers(1, 201))
        points = [
            FrontierPoint(
                x=float(rng.integers(0, 30)) / 3.0,
                y=float(rng.integers(0, 30)) / 3.0,
                run_id=f"run{i:03d}",
            )
            for i in range(m)
        ]
        assert list(pareto_front(points)) == pareto_front_quadratic(points)


# --------------------------------------------------------------- hypervolume


def test_hypervolume_of_simple_staircases():
    assert hypervolume(pareto_front(make_points((1, 1))), ref=(2, 2)) == 1.0
    front = pareto_front(make_points((0, 2), (1, 1), (2, 0)))
    assert hypervolume(front, ref=(3, 3)) == 6.0


def test_hypervolume_matches_rejection_sampling():
    rng = np.random.default_rng(52)
    points = [
        FrontierPoint(x=float(x), y=float(y), run_id=f"r{i}")
        for i, (x, y) in enumerate(rng.uniform(0.0, 1.0, size=(12, 2)))
    ]
    front = pareto_front(points)
    exact = hypervolume(front, ref=(1.1, 1.1))
    est, se = hypervolume_monte_carlo(front, (1.1, 1.1), samples=200_000, rng=rng)
    assert abs(exact - est) <= 3.0 * se


# ----------------------------------------------------------------- dominance


def test_a_front_dominates_itself_weakly_but_not_strictly():
    front = pareto_front(make_points((1, 3), (2, 2), (3, 1)))
    report = dominates(front, front)
    assert report.all_dominated
    assert report.fraction_weak == 1.0
    assert report.strict_count == 0
    assert report.per_point == ("weak", "weak", "weak")


def test_a_uniformly_better_front_dominates_strictly():
    worse = pareto_front(make_points((1, 3), (2, 2), (3, 1)))
    better = pareto_front(make_points((0.9, 2.9), (1.9, 1.9), (2.9, 0.9)))
    report = dominates(better, worse)
    assert report.fraction_weak == 1.0
    assert report.strict_count == 3


def test_dominance_tolerance_forgives_small_deficits():
    target = pareto_front(make_points((1, 1)))
    nearby = pareto_front(make_points((1.05, 0.95)))
    assert dominates(nearby, target).fraction_weak == 0.0
    report = dominates(nearby, target, tol=0.1)
    assert report.per_point == ("weak",)
    assert report.strict_count == 0
    clearly_better = pareto_front(make_points((0.8, 1.0)))
    assert dominates(clearly_better, target, tol=0.1).per_point == ("strict",)


def test_dominance_rejects_a_negative_tolerance():
    front = pareto_front(make_points((1, 1)))
    with pytest.raises(ConfigError, match="tolerance must be nonnegative"):
        dominates(front, front, tol=-0.5)


# ---------------------------------------------------------------- validation


def test_front_construction_errors():
    with pytest.raises(ConfigError, match="zero points"):
        pareto_front([])
    with pytest.raises(ConfigError, match="non-finite"):
        pareto_front([FrontierPoint(x=math.nan, y=1.0, run_id="bad")])
    with pytest.raises(ConfigError, match="nonnegative"):
        pareto_front([FrontierPoint(x=-1.0, y=1.0, run_id="bad")])
    with pytest.raises(ConfigError, match="strictly ascend"):
        ParetoFrontier(points=(FrontierPoint(1, 1), FrontierPoint(2, 2)))


def test_hypervolume_reference_box_errors():
    front = pareto_front(make_points((1, 1)))
    with pytest.raises(ConfigError, match="outside the reference box"):
        hypervolume(front, ref=(0.5, 2.0))
    with pytest.raises(ConfigError, match="reference point must be finite"):
        hypervolume(front, ref=(math.inf, 2.0))


# ------------------------------------------------------------------- records


def test_points_from_records_projects_and_skips_incomplete_runs():
    records = [
        {"run_id": "a", "L_ret": 3.0, "L_ft": 1.0, "L_pre": 9.0},
        {"run_id": "b", "L_ret": None, "L_ft": None, "L_pre": None},
        {"run_id": "c", "L_ret": 2.0, "L_ft": 4.0, "L_pre": 8.0},
    ]
    points = points_from_records(records)
    assert [(p.run_id, p.x, p.y) for p in points] == [("a", 3.0, 1.0), ("c", 2.0, 4.0)]
    swapped = points_from_records(records, projection="pre_ret")
    assert [(p.x, p.y) for p in swapped] == [(9.0, 3.0), (8.0, 2.0)]
    with pytest.raises(ConfigError, match="unknown projection"):
        points_from_records(records, projection="ft_vs_time")
