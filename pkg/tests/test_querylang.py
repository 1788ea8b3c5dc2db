import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmq.core import BBox, Region, quadrant_regions
from vmq.exceptions import (
    QueryLexicalError,
    QueryShapeError,
    QuerySyntaxError,
    UndeclaredVariableError,
    UnknownNameError,
)
from vmq.predicates import Comparator, SpatialRelation
from vmq.querylang import SelectKind, WindowSpec, ast_to_dict, parse_query, print_query, tokenize

from conftest import random_query

GOLDEN = json.loads((Path(__file__).parent / "data" / "reference_queries.json").read_text())


def test_minimal_query(classes):
    q = parse_query("SELECT FRAMES WHERE COUNT(person) = 2", classes)
    assert q.select_kind is SelectKind.FRAMES and q.window is None
    (p,) = q.count_preds
    assert (p.class_id, p.comparator, p.value) == (0, Comparator.EQ, 2)


def test_q5_style_count_query(classes):
    q = parse_query("SELECT COUNT WHERE ORDER(a:car, b:person) = RIGHT AND COUNT(car)=1 AND COUNT(person)=1 "
                    "WINDOW 5000 ADVANCE 5000", classes)
    assert q.select_kind is SelectKind.COUNT_FRAMES
    assert q.window == WindowSpec(5000, 5000)
    (sp,) = q.spatial_preds
    assert (sp.var_a, sp.target, sp.relation) == ("a", "b", SpatialRelation.RIGHT)
    assert [(v.name, v.class_id) for v in q.object_vars] == [("a", 1), ("b", 0)]


def test_separate_declarations_are_equivalent(classes):
    inline = parse_query("SELECT FRAMES WHERE ORDER(a:car, b:person) = RIGHT", classes)
    separate = parse_query("SELECT FRAMES WHERE a:car AND b:person AND ORDER(a, b) = RIGHT", classes)
    later = parse_query("SELECT FRAMES WHERE ORDER(a, b) = RIGHT AND a:car AND b:person", classes)
    assert inline == separate == later


def test_keywords_case_insensitive_and_comments(classes):
    a = parse_query("select frames where count(person) >= 1 -- trailing\n and COUNT(*) <= 4", classes)
    b = parse_query("SELECT FRAMES WHERE COUNT(person) >= 1 AND COUNT(*) <= 4", classes)
    assert a == b


def test_window_spellings(classes):
    base = "SELECT COUNT(*) WHERE COUNT(car) >= 1 WINDOW "
    for w in ("10 ADVANCE 5", "HOPPING (SIZE 10, ADVANCE BY 5)", "HOPING (SIZE 10, ADVANCE BY 5)", "SIZE 10 ADVANCE 5"):
        assert parse_query(base + w, classes).window == WindowSpec(10, 5)


@pytest.mark.parametrize("text, err, token", [
    ("SELECT FRAMES WHERE ORDER(a:car, b:bus) = SIDEWAYS", QuerySyntaxError, "SIDEWAYS"),
    ("SELECT FRAMES WHERE COUNT(car) == 1", QuerySyntaxError, None),
    ("SELECT FRAMES WHERE COUNT(car) = 1 AND", QuerySyntaxError, "end of query"),
    ("SELECT FRAMES WHERE COUNT(car) = 1 ;", QueryLexicalError, ";"),
    ("SELECT FRAMES WHERE COUNT(truck) = 1", UnknownNameError, "truck"),
    ("SELECT FRAMES WHERE c:car IN bike_lane", UnknownNameError, "bike_lane"),
    ("SELECT FRAMES WHERE ORDER(c:car, x) = LEFT", UndeclaredVariableError, "x"),
    ("SELECT FRAMES WHERE c IN lower_left", UndeclaredVariableError, "c"),
    ("SELECT FRAMES WHERE COUNT(car) = 1 WINDOW 10 ADVANCE 10", QueryShapeError, None),
    ("SELECT COUNT WHERE COUNT(car) = 1", QueryShapeError, None),
    ("SELECT COUNT WHERE COUNT(car) = 1 WINDOW 5 ADVANCE 10", QueryShapeError, None),
    ("", QuerySyntaxError, None),
])
def test_error_kinds(classes, text, err, token):
    with pytest.raises(err) as info:
        parse_query(text, classes)
    assert info.value.line is not None and info.value.column is not None
    if token is not None:
        assert token in str(info.value)


def test_error_position_is_one_based_line_and_column(classes):
    with pytest.raises(QuerySyntaxError) as info:
        parse_query("SELECT FRAMES\nWHERE ORDER(a:car, b:bus) = UP", classes)
    assert (info.value.line, info.value.column) == (2, 29)


def test_conflicting_declarations(classes):
    with pytest.raises(QuerySyntaxError):
        parse_query("SELECT FRAMES WHERE a:car IN lower_left AND a:bus IN lower_left", classes)


def test_extensions(classes):
    q = parse_query("SELECT FRAMES WHERE p:person NOT IN lower_left OVERLAP 0.5 AND "
                    "ORDER(c:car[color=red], upper_left) = LEFT", classes)
    (rp,) = q.region_preds
    assert rp.negated and rp.mode == "overlap" and rp.min_overlap == 0.5
    (sp,) = q.spatial_preds
    assert sp.target_is_region and sp.region.name == "upper_left"
    assert q.var("c").attrs == (("color", "red"),)
    with pytest.raises(QuerySyntaxError):
        parse_query("SELECT FRAMES WHERE p:person IN lower_left OVERLAP 1.5", classes)


def test_custom_regions(classes):
    lane = {"bike_lane": Region("bike_lane", BBox(0.0, 0.7, 1.0, 0.8))}
    q = parse_query("SELECT FRAMES WHERE b:bus NOT IN bike_lane", classes, lane)
    assert q.region_preds[0].region == lane["bike_lane"]


def test_tokens_carry_positions():
    toks = tokenize("SELECT\n  FRAMES")
    assert [(t.text, t.line, t.column) for t in toks[:2]] == [("SELECT", 1, 1), ("FRAMES", 2, 3)]


@pytest.mark.parametrize("name", sorted(GOLDEN["queries"]))
def test_reference_query_goldens(classes, name):
    entry = GOLDEN["queries"][name]
    ast = parse_query(entry["text"], classes)
    assert ast_to_dict(ast) == entry["ast"]
    assert parse_query(print_query(ast), classes) == ast


def test_print_emits_window(classes):
    q = parse_query("SELECT AVG(car) WHERE c:car IN lower_right WINDOW HOPING (SIZE 50, ADVANCE BY 25)", classes)
    text = print_query(q)
    assert text.endswith("WINDOW 50 ADVANCE 25") and text.startswith("SELECT AVG(car)")


def test_parse_is_deterministic(classes):
    text = GOLDEN["queries"]["a3"]["text"]
    assert parse_query(text, classes) == parse_query(text, classes)


@given(st.integers(0, 2**32 - 1), st.sampled_from(list(SelectKind)))
def test_round_trip_over_generated_asts(classes, seed, kind):
    rng = np.random.default_rng(seed)
    window = None if kind is SelectKind.FRAMES else WindowSpec(int(rng.integers(2, 100)), 1)
    avg = int(rng.integers(0, classes.n)) if kind is SelectKind.AVG_CLASS_COUNT else None
    ast = random_query(rng, classes, max_vars=3, select=kind, window=window, avg_class=avg)
    assert parse_query(print_query(ast), classes, quadrant_regions()) == ast
