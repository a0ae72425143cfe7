import random

import pytest
from hypothesis import given, settings, strategies as st

from vanetkit import geomodel
from vanetkit.geomodel import (FORWARD, DocumentError, GeoCoordinate,
                               MobilityDirective, VehicleState, advance_vehicle,
                               distance, grid_document, load_network)

TWO_SEGMENTS = """
junction a 0 0
junction b 100 0
junction c 100 50
segment s1 a b 50 twoway
segment s2 b c 50 twoway
"""


def test_distance_basics():
    assert distance(GeoCoordinate(0, 0), GeoCoordinate(0, 0)) == 0
    assert distance(GeoCoordinate(0, 0), GeoCoordinate(3, 4)) == 5
    assert distance(GeoCoordinate(10, 10), GeoCoordinate(85, 10)) == 75


@settings(max_examples=1000, deadline=None)
@given(st.tuples(*[st.floats(-1e4, 1e4) for _ in range(6)]))
def test_distance_metric_axioms(coords):
    a = GeoCoordinate(coords[0], coords[1])
    b = GeoCoordinate(coords[2], coords[3])
    c = GeoCoordinate(coords[4], coords[5])
    assert distance(a, b) >= 0
    assert distance(a, b) == distance(b, a)
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9


def test_load_network_shared_endpoint():
    net = load_network(TWO_SEGMENTS)
    assert len(net.junctions) == 3
    assert len(net.segments) == 2
    assert net.segments_at("b") == ["s1", "s2"]


def test_load_network_rejects_zero_speed_limit():
    doc = "junction a 0 0\njunction b 10 0\nsegment s a b 0 twoway\n"
    with pytest.raises(DocumentError, match="speed_limit"):
        load_network(doc)


def test_load_network_rejects_duplicate_segment_ids():
    doc = TWO_SEGMENTS + "segment s1 a c 50 twoway\n"
    with pytest.raises(DocumentError, match="duplicate segment"):
        load_network(doc)


def test_grid_4x4_has_24_segments_and_sane_degrees():
    # Oracle: enumerate the expected edge set of a 4x4 grid graph directly.
    expected_edges = set()
    for r in range(4):
        for c in range(4):
            if c + 1 < 4:
                expected_edges.add((f"j{r}_{c}", f"j{r}_{c + 1}"))
            if r + 1 < 4:
                expected_edges.add((f"j{r}_{c}", f"j{r + 1}_{c}"))
    net = load_network(grid_document(4, 4))
    assert len(net.segments) == len(expected_edges) == 24
    got = {(s.junction_a, s.junction_b) for s in net.segments.values()}
    assert got == expected_edges
    assert {net.degree(j) for j in net.junctions} == {2, 3, 4}


def test_advance_straight_segment():
    net = load_network("junction a 0 0\njunction b 500 0\nsegment s a b 60 twoway\n")
    state = VehicleState("v", "s", FORWARD, 0.0)
    moved = advance_vehicle(state, net, 10.0, MobilityDirective(36.0))
    assert moved.offset == pytest.approx(100.0)   # 36 km/h == 10 m/s
    assert moved.position(net).x == pytest.approx(100.0)


def test_advance_zero_speed_is_identity():
    net = load_network(TWO_SEGMENTS)
    state = VehicleState("v", "s1", FORWARD, 42.0)
    moved = advance_vehicle(state, net, 5.0, MobilityDirective(0.0))
    assert moved.offset == 42.0
    assert moved.segment_id == "s1"


def test_advance_through_junction_with_turn():
    # Hand-computed: 5 m short of the junction at 36 km/h for 1 s lands
    # 5 m onto the next segment.
    net = load_network(TWO_SEGMENTS)
    state = VehicleState("v", "s1", FORWARD, 95.0)
    directive = MobilityDirective(36.0, ["s2"])
    moved = advance_vehicle(state, net, 1.0, directive)
    assert moved.segment_id == "s2"
    assert moved.direction == FORWARD
    assert moved.offset == pytest.approx(5.0)
    assert directive.turns == []


def test_advance_clamps_without_turn():
    net = load_network(TWO_SEGMENTS)
    state = VehicleState("v", "s1", FORWARD, 95.0)
    moved = advance_vehicle(state, net, 10.0, MobilityDirective(36.0))
    assert moved.segment_id == "s1"
    assert moved.offset == 100.0


def test_advance_rejects_non_adjacent_turn():
    net = load_network(TWO_SEGMENTS + "junction d 0 50\nsegment s3 c d 50 twoway\n")
    state = VehicleState("v", "s1", FORWARD, 95.0)
    with pytest.raises(geomodel.DirectiveError):
        advance_vehicle(state, net, 1.0, MobilityDirective(36.0, ["s3"]))


def test_advance_respects_oneway():
    doc = "junction a 0 0\njunction b 100 0\njunction c 200 0\n" \
          "segment s1 a b 50 twoway\nsegment s2 c b 50 oneway\n"
    net = load_network(doc)
    state = VehicleState("v", "s1", FORWARD, 95.0)
    with pytest.raises(geomodel.DirectiveError):
        advance_vehicle(state, net, 1.0, MobilityDirective(36.0, ["s2"]))


def test_advance_is_deterministic():
    net = load_network(TWO_SEGMENTS)
    state = VehicleState("v", "s1", FORWARD, 12.25, speed=30.0)
    a = advance_vehicle(state, net, 1.0, MobilityDirective(33.3, ["s2"]))
    b = advance_vehicle(state, net, 1.0, MobilityDirective(33.3, ["s2"]))
    assert a == b


def test_position_continuity_along_trace():
    rng = random.Random(11)
    net = load_network(grid_document(3, 3, spacing=200.0))
    state = VehicleState("v", "h0_0", FORWARD, 0.0)
    turns = []
    prev_pos = state.position(net)
    for step in range(120):
        if not turns:
            junction = net.segments[state.segment_id].exit_junction(state.direction)
            options = [s for s in net.segments_at(junction) if s != state.segment_id]
            turns = [rng.choice(options)] if options else []
        speed = rng.uniform(0.0, 50.0)
        directive = MobilityDirective(speed, turns)
        state = advance_vehicle(state, net, 1.0, directive)
        turns = directive.turns
        pos = state.position(net)
        assert distance(prev_pos, pos) <= speed / 3.6 * 1.0 + 1e-6
        prev_pos = pos


def test_snap_and_path_between_points():
    net = load_network(TWO_SEGMENTS)
    snap = geomodel.snap_to_network(net, GeoCoordinate(50.0, 10.0))
    assert snap.segment_id == "s1"
    assert snap.point == GeoCoordinate(50.0, 0.0)
    points, cost = geomodel.path_between_points(
        net, GeoCoordinate(0.0, 0.0), GeoCoordinate(100.0, 0.0))
    assert cost == pytest.approx(100.0)
    assert points[0] == GeoCoordinate(0.0, 0.0)
    assert points[-1] == GeoCoordinate(100.0, 0.0)


def test_trace_validation_flags_teleports():
    net = load_network(TWO_SEGMENTS)
    good = geomodel.MobilityTrace("v", [
        (0.0, VehicleState("v", "s1", FORWARD, 0.0, speed=36.0)),
        (1.0, VehicleState("v", "s1", FORWARD, 10.0, speed=36.0)),
        (2.0, VehicleState("v", "s1", FORWARD, 20.0, speed=36.0)),
    ])
    assert geomodel.validate_trace(good, net) == []
    teleport = geomodel.MobilityTrace("v", [
        (0.0, VehicleState("v", "s1", FORWARD, 0.0, speed=36.0)),
        (1.0, VehicleState("v", "s1", FORWARD, 90.0, speed=36.0)),
    ])
    assert any("exceeds speed budget" in p for p in geomodel.validate_trace(teleport, net))
    unordered = geomodel.MobilityTrace("v", [
        (5.0, VehicleState("v", "s1", FORWARD, 0.0)),
        (5.0, VehicleState("v", "s1", FORWARD, 0.0)),
    ])
    assert any("strictly increasing" in p for p in geomodel.validate_trace(unordered, net))


def test_connected_component_check():
    doc = TWO_SEGMENTS + "junction x 900 900\njunction y 950 900\nsegment iso x y 50 twoway\n"
    net = load_network(doc)
    assert net.connected({"a", "b", "c"})
    assert not net.connected({"a", "x"})
