import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmq.core import CountVector, ObjectInstance
from vmq.exceptions import GridMismatchError, ParameterError
from vmq.gridding import OccupancyGrid, rasterize
from vmq.predicates import (
    Comparator,
    CountPredicate,
    SpatialRelation,
    count_range_satisfies,
    eval_count,
    eval_frame_exact,
    frame_value,
    relation_between_grids,
    relation_between_objects,
)
from vmq.querylang import parse_query

from conftest import boxes, enumeration_oracle, frame, masks, obj, random_frame, random_query

REL = list(SpatialRelation)


def test_eval_count_examples():
    assert eval_count(CountPredicate(0, "=", 2), CountVector((2, 0, 0)))
    assert not eval_count(CountPredicate(1, ">=", 1), CountVector((2, 0, 0)))
    assert eval_count(CountPredicate(None, "<=", 2), CountVector((1, 1, 0)))
    with pytest.raises(ParameterError):
        CountPredicate(0, "=", -1)


@given(st.sampled_from(list(Comparator)), st.integers(0, 9), st.lists(st.integers(0, 9), min_size=3, max_size=3),
       st.sampled_from([None, 0, 1, 2]))
def test_eval_count_matches_integer_comparison(cmp, value, counts, cls):
    v = sum(counts) if cls is None else counts[cls]
    expected = {"=": v == value, ">=": v >= value, "<=": v <= value}[cmp.value]
    assert eval_count(CountPredicate(cls, cmp, value), CountVector(counts)) == expected


@given(st.sampled_from(list(Comparator)), st.integers(0, 9), st.integers(0, 12), st.integers(0, 2))
def test_count_widening_matches_enumeration(cmp, value, reported, relax):
    window = range(max(0, reported - relax), reported + relax + 1)
    expected = any(cmp(c, value) for c in window)
    assert count_range_satisfies(CountPredicate(0, cmp, value), reported, relax) == expected


@given(st.sampled_from(list(Comparator)), st.integers(0, 9), st.integers(0, 12))
def test_count_widening_monotone(cmp, value, reported):
    p = CountPredicate(0, cmp, value)
    res = [count_range_satisfies(p, reported, r) for r in (0, 1, 2)]
    assert res == sorted(res)


def test_relation_examples():
    a, b = obj(0, (0.0, 0.0, 0.2, 0.2)), obj(0, (0.5, 0.5, 0.7, 0.7))
    for mode in ("centroid", "extent"):
        assert relation_between_objects(a, b, SpatialRelation.LEFT, mode)
        assert relation_between_objects(a, b, SpatialRelation.ABOVE, mode)  # y grows downward
        assert not relation_between_objects(a, b, SpatialRelation.RIGHT, mode)
    assert not any(relation_between_objects(a, a, r) for r in REL)
    with pytest.raises(ParameterError):
        relation_between_objects(a, b, SpatialRelation.LEFT, "iou")


@given(boxes(), boxes(), st.sampled_from(REL), st.sampled_from(["centroid", "extent"]))
def test_relation_duality_and_antisymmetry(ba, bb, rel, mode):
    a, b = ObjectInstance(0, ba), ObjectInstance(0, bb)
    assert relation_between_objects(a, b, rel, mode) == relation_between_objects(b, a, rel.dual, mode)
    assert not (relation_between_objects(a, b, rel, mode) and relation_between_objects(b, a, rel, mode))


@given(boxes(), boxes())
def test_centroid_mode_matches_sign_oracle(ba, bb):
    dx = (ba.x_min + ba.x_max) - (bb.x_min + bb.x_max)
    dy = (ba.y_min + ba.y_max) - (bb.y_min + bb.y_max)
    a, b = ObjectInstance(0, ba), ObjectInstance(0, bb)
    assert relation_between_objects(a, b, SpatialRelation.LEFT) == (dx < 0)
    assert relation_between_objects(a, b, SpatialRelation.RIGHT) == (dx > 0)
    assert relation_between_objects(a, b, SpatialRelation.ABOVE) == (dy < 0)
    assert relation_between_objects(a, b, SpatialRelation.BELOW) == (dy > 0)


def grid_oracle(a, b, rel):
    ca, cb = list(zip(*np.nonzero(a))), list(zip(*np.nonzero(b)))
    test = {
        SpatialRelation.LEFT: lambda p, q: p[1] < q[1],
        SpatialRelation.RIGHT: lambda p, q: p[1] > q[1],
        SpatialRelation.ABOVE: lambda p, q: p[0] < q[0],
        SpatialRelation.BELOW: lambda p, q: p[0] > q[0],
    }[rel]
    return any(test(p, q) for p in ca for q in cb)


def test_grid_relation_examples():
    a = np.zeros((16, 16), dtype=bool)
    b = a.copy()
    a[4, 3] = True
    b[4, 10] = True
    for mode in ("exists", "centroid"):
        assert relation_between_grids(a, b, SpatialRelation.LEFT, mode)
        assert not relation_between_grids(a, b, SpatialRelation.RIGHT, mode)
        assert not any(relation_between_grids(a, a, r, mode) for r in REL)
    assert not relation_between_grids(a, np.zeros_like(a), SpatialRelation.LEFT)
    with pytest.raises(GridMismatchError):
        relation_between_grids(a, np.zeros((8, 8), dtype=bool), SpatialRelation.LEFT)
    with pytest.raises(ParameterError):
        relation_between_grids(OccupancyGrid.empty(2, 4), OccupancyGrid.empty(1, 4), SpatialRelation.LEFT)


@given(masks(), masks(), st.sampled_from(REL))
def test_grid_relation_matches_pair_scan(a, b, rel):
    assert relation_between_grids(a, b, rel) == grid_oracle(a, b, rel)


@given(masks(), masks(), st.sampled_from(REL))
def test_grid_centroid_mode(a, b, rel):
    if a.any() and b.any():
        axis = 1 if rel in (SpatialRelation.LEFT, SpatialRelation.RIGHT) else 0
        ma, mb = np.nonzero(a)[axis].mean(), np.nonzero(b)[axis].mean()
        less = rel in (SpatialRelation.LEFT, SpatialRelation.ABOVE)
        assert relation_between_grids(a, b, rel, "centroid") == bool(ma < mb if less else ma > mb)


@given(boxes(), boxes(), st.integers(2, 16))
def test_grid_soundness_under_refinement(ba, bb, g):
    if not relation_between_objects(ba, bb, SpatialRelation.LEFT, "extent"):
        return
    f = frame(ObjectInstance(0, ba), ObjectInstance(1, bb))
    gr = rasterize(f, 2, g)
    cols_a = set(np.nonzero(gr.for_class(0))[1])
    cols_b = set(np.nonzero(gr.for_class(1))[1])
    if cols_a and cols_b and not cols_a & cols_b:
        assert relation_between_grids(gr.for_class(0), gr.for_class(1), SpatialRelation.LEFT)


def test_eval_frame_exact_examples(classes):
    q = parse_query("SELECT FRAMES WHERE COUNT(person) = 2", classes)
    assert eval_frame_exact(q, frame(obj("person", (0, 0, .1, .1)), obj("person", (.5, .5, .6, .6))))
    assert not eval_frame_exact(q, frame(obj("person", (0, 0, .1, .1))))
    # the car is left of the person: the person lies RIGHT of the car
    q = parse_query("SELECT FRAMES WHERE ORDER(c:car, p:person) = RIGHT", classes)
    f = frame(obj("car", (0.1, 0.4, 0.3, 0.6)), obj("person", (0.7, 0.4, 0.9, 0.6)))
    assert eval_frame_exact(q, f)
    f = frame(obj("car", (0.7, 0.4, 0.9, 0.6)), obj("person", (0.1, 0.4, 0.3, 0.6)))
    assert not eval_frame_exact(q, f)


def test_bindings_are_injective(classes):
    q = parse_query("SELECT FRAMES WHERE a:person IN upper_left AND b:person IN upper_left", classes)
    one = frame(obj("person", (0.1, 0.1, 0.2, 0.2)))
    assert not eval_frame_exact(q, one)
    assert eval_frame_exact(q, frame(*one.objects, obj("person", (0.2, 0.2, 0.3, 0.3))))


def test_attribute_and_region_order(classes):
    q = parse_query("SELECT FRAMES WHERE c:car[color=red] IN lower_right", classes)
    assert eval_frame_exact(q, frame(obj("car", (.6, .6, .7, .7), color="red")))
    assert not eval_frame_exact(q, frame(obj("car", (.6, .6, .7, .7), color="blue")))
    q = parse_query("SELECT FRAMES WHERE ORDER(c:car, upper_right) = RIGHT", classes)
    assert eval_frame_exact(q, frame(obj("car", (.1, .1, .2, .2))))
    assert not eval_frame_exact(q, frame(obj("car", (.8, .1, .9, .2))))


def test_frame_value_for_avg(classes):
    q = parse_query("SELECT AVG(car) WHERE c:car IN lower_left WINDOW 10 ADVANCE 10", classes)
    f = frame(obj("car", (.1, .6, .2, .7)), obj("car", (.2, .7, .3, .8)), obj("car", (.6, .1, .7, .2)))
    assert frame_value(q, f) == 2.0
    assert frame_value(q, frame(obj("car", (.6, .1, .7, .2)))) == 0.0
    q = parse_query("SELECT COUNT WHERE COUNT(car) >= 1 WINDOW 10 ADVANCE 10", classes)
    assert frame_value(q, f) == 1.0


def test_eval_frame_exact_matches_enumeration(classes):
    rng = np.random.default_rng(2024)
    for _ in range(2000):
        q = random_query(rng, classes)
        f = random_frame(rng)
        assert eval_frame_exact(q, f) == enumeration_oracle(q, f)
