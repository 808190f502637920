import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from footfall_lab.errors import EmptyInput, MalformedRecord, ZeroDistanceStep
from footfall_lab.routes import (
    WORD_WEIGHTS,
    Route,
    RouteStep,
    extract_direction_words,
    load_route_file,
    route_score,
    score_route_file,
    select_fastest_route,
    write_route_scores,
)

TABLE_1 = {
    "head": 1, "toward": 1, "towards": 1, "continue": 1, "follow": 1, "straight": 1, "walk": 1,
    "slight": 2, "sharp": 2,
    "turn": 3,
    "cross": 4,
    "upper": 5, "take": 5,
    "roundabout": 6,
}


def test_weight_table_verbatim():
    assert dict(WORD_WEIGHTS) == TABLE_1
    # toward/towards share one entry, leaving thirteen words
    assert len(set(WORD_WEIGHTS) - {"towards"}) == 13
    with pytest.raises(TypeError):
        WORD_WEIGHTS["turn"] = 9


def _route(duration, n_steps):
    return Route(duration, tuple(RouteStep("walk", 10.0) for _ in range(n_steps)))


def test_fastest_route_examples():
    only = _route(300, 3)
    assert select_fastest_route([only]) is only
    routes = [_route(300, 2), _route(240, 5), _route(400, 1)]
    assert select_fastest_route(routes) is routes[1]


def test_fastest_route_tie_breaks():
    routes = [_route(300, 6), _route(300, 4)]
    assert select_fastest_route(routes) is routes[1]
    same = [_route(300, 4), _route(300, 4)]
    assert select_fastest_route(same) is same[0]


def test_fastest_route_empty():
    with pytest.raises(EmptyInput):
        select_fastest_route([])


@pytest.mark.parametrize(
    "text, expected",
    [
        ("Turn left onto High St", [("turn", 3)]),
        ("Head north toward Market Sq", [("head", 1), ("toward", 1)]),
        ("Proceed along the river", []),
        ("Grab a takeaway on Upper Street", [("upper", 5)]),
        ("At the roundabout, take exit onto Mill Rd", [("roundabout", 6), ("take", 5)]),
        ("TURN right, then turn left", [("turn", 3), ("turn", 3)]),
        ("Walk towards the station", [("walk", 1), ("towards", 1)]),
        ("Crossroads ahead; cross at the lights", [("cross", 4)]),
    ],
)
def test_extract_direction_words(text, expected):
    assert extract_direction_words(RouteStep(text, 20.0)) == expected


def test_first_word_only_mode():
    step = RouteStep("Head north toward Market Sq", 100.0)
    assert extract_direction_words(step, multi_match=False) == [("head", 1)]


def test_score_examples():
    assert route_score([RouteStep("Turn left onto High St", 50)]).value == pytest.approx(0.06, abs=1e-12)
    steps = [RouteStep("Head north toward X", 100), RouteStep("Turn right onto Y", 50)]
    assert route_score(steps).value == pytest.approx(0.08, abs=1e-12)
    assert route_score([]).value == 0.0


def test_score_contributions_sum():
    steps = [RouteStep("Head north toward X", 100), RouteStep("Turn right onto Y", 50)]
    score = route_score(steps)
    assert score.contributions == [("head", 1, 100, 0.01), ("toward", 1, 100, 0.01), ("turn", 3, 50, 0.06)]
    assert abs(score.value - sum(c[3] for c in score.contributions)) <= 1e-9


def test_zero_distance_step():
    with pytest.raises(ZeroDistanceStep):
        route_score([RouteStep("Turn left", 0.0)])


words = st.sampled_from(sorted(TABLE_1) + ["left", "onto", "the", "street", "takeaway", "north"])
steps_st = st.lists(
    st.tuples(st.lists(words, min_size=1, max_size=6).map(" ".join), st.floats(0.5, 5000)),
    max_size=12,
).map(lambda xs: [RouteStep(t, d) for t, d in xs])


@given(steps_st, steps_st)
def test_score_additive_over_concatenation(a, b):
    assert route_score(a + b).value == pytest.approx(route_score(a).value + route_score(b).value, abs=1e-12)


@given(steps_st)
def test_doubling_distances_halves_score(steps):
    doubled = [RouteStep(s.instruction, 2 * s.distance) for s in steps]
    assert route_score(doubled).value == pytest.approx(route_score(steps).value / 2, rel=1e-12, abs=1e-15)


@given(steps_st, st.sampled_from([str.upper, str.title, lambda s: s.replace(" ", ", ") + "."]))
def test_case_and_punctuation_invariant(steps, transform):
    changed = [RouteStep(transform(s.instruction), s.distance) for s in steps]
    assert route_score(changed).value == route_score(steps).value


def test_route_file_round_trip():
    payload = [
        {"pair_id": "A|B", "routes": [
            {"duration_s": 300, "steps": [{"text": "Turn left", "distance_m": 50}]},
            {"duration_s": 240, "steps": [{"text": "Head north toward X", "distance_m": 100},
                                          {"text": "Turn right", "distance_m": 50}]},
        ]},
        {"pair_id": "C|D", "routes": [{"duration_s": 100, "steps": []}]},
    ]
    entries = load_route_file(io.StringIO(json.dumps(payload)))
    rows = list(score_route_file(entries))
    assert [(p, i) for p, i, _, _ in rows] == [("A|B", 1), ("C|D", 0)]
    assert rows[0][3].value == pytest.approx(0.08, abs=1e-12)
    buf = io.StringIO()
    write_route_scores(rows, buf)
    assert buf.getvalue().splitlines()[0] == "pair_id,route_index,duration_s,n_steps,n_words,score"
    assert buf.getvalue().splitlines()[2] == "C|D,0,100.0,0,0,0.0"


def test_route_file_single_object_and_errors():
    one = {"pair_id": "A|B", "routes": [{"duration_s": 1, "steps": [{"text": "walk", "distance_m": 4}]}]}
    assert load_route_file(io.StringIO(json.dumps(one)))[0][0] == "A|B"
    with pytest.raises(MalformedRecord):
        load_route_file(io.StringIO("{not json"))
    with pytest.raises(MalformedRecord):
        load_route_file(io.StringIO(json.dumps({"pair_id": "A|B"})))
