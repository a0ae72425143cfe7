"""Road network geometry, vehicle kinematics and mobility traces.

Coordinates are planar meters relative to a scenario origin; distances
are Euclidean, which keeps the radio-range arithmetic exact.  Lanes are
collapsed to a per-segment one-way/two-way flag.  All operations here
are pure value transformations driven single-threaded by the simulator.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

FORWARD = "fwd"   # travel from junction_a towards junction_b
REVERSE = "rev"

BATTERY_LEVELS = ("very_low", "low", "medium", "high", "very_high")


class DocumentError(Exception):
    """A scenario input document failed to parse or validate.

    Carries every problem found, not just the first, so callers can
    report them all at once.
    """

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class DirectiveError(Exception):
    """A mobility directive named a segment that is not adjacent here."""


@dataclass(frozen=True)
class GeoCoordinate:
    x: float  # meters east of scenario origin
    y: float  # meters north of scenario origin


def distance(a: GeoCoordinate, b: GeoCoordinate) -> float:
    return math.hypot(b.x - a.x, b.y - a.y)


@dataclass(frozen=True)
class RoadSegment:
    segment_id: str
    junction_a: str
    junction_b: str
    start: GeoCoordinate
    end: GeoCoordinate
    speed_limit: float        # km/h
    oneway: bool = False

    @property
    def length(self) -> float:
        return distance(self.start, self.end)

    @property
    def travel_time_base(self) -> float:
        """Free-flow traversal time in seconds."""
        return self.length / (self.speed_limit / 3.6)

    def point_at(self, offset: float, direction: str = FORWARD) -> GeoCoordinate:
        """Coordinate at `offset` meters from the entry end for `direction`."""
        t = min(max(offset / self.length, 0.0), 1.0)
        if direction == REVERSE:
            t = 1.0 - t
        return GeoCoordinate(
            self.start.x + (self.end.x - self.start.x) * t,
            self.start.y + (self.end.y - self.start.y) * t,
        )

    def entry_junction(self, direction: str) -> str:
        return self.junction_a if direction == FORWARD else self.junction_b

    def exit_junction(self, direction: str) -> str:
        return self.junction_b if direction == FORWARD else self.junction_a


class RoadNetwork:
    """Segments plus junction adjacency derived from shared endpoints."""

    def __init__(self, junctions: dict[str, GeoCoordinate], segments: dict[str, RoadSegment]):
        self.junctions = junctions
        self.segments = segments
        self.adjacency: dict[str, list[str]] = {j: [] for j in junctions}
        for seg in segments.values():
            self.adjacency[seg.junction_a].append(seg.segment_id)
            self.adjacency[seg.junction_b].append(seg.segment_id)
        for seg_ids in self.adjacency.values():
            seg_ids.sort()

    def degree(self, junction_id: str) -> int:
        return len(self.adjacency[junction_id])

    def segments_at(self, junction_id: str) -> list[str]:
        return self.adjacency[junction_id]

    def connected(self, junction_ids: Iterable[str]) -> bool:
        """True when the given junctions all sit in one component."""
        wanted = set(junction_ids)
        if not wanted:
            return True
        start = next(iter(wanted))
        seen = {start}
        stack = [start]
        while stack:
            here = stack.pop()
            for seg_id in self.adjacency[here]:
                seg = self.segments[seg_id]
                for nxt in (seg.junction_a, seg.junction_b):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
        return wanted <= seen


def load_network(text: str) -> RoadNetwork:
    """Parse a road description document.

    Grammar (one statement per line, `#` starts a comment):
        junction <id> <x> <y>
        segment <id> <junctionA> <junctionB> <speed_limit_kmh> <oneway|twoway>
    Units are meters and km/h.
    """
    problems: list[str] = []
    junctions: dict[str, GeoCoordinate] = {}
    raw_segments: list[tuple[int, list[str]]] = []

    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        fields = body.split()
        kind = fields[0]
        if kind == "junction":
            if len(fields) != 4:
                problems.append(f"line {lineno}: junction needs <id> <x> <y>")
                continue
            name = fields[1]
            if name in junctions:
                problems.append(f"line {lineno}: duplicate junction id {name!r}")
                continue
            try:
                junctions[name] = GeoCoordinate(float(fields[2]), float(fields[3]))
            except ValueError:
                problems.append(f"line {lineno}: junction coordinates must be numeric")
        elif kind == "segment":
            if len(fields) != 6:
                problems.append(f"line {lineno}: segment needs <id> <a> <b> <limit> <oneway|twoway>")
                continue
            raw_segments.append((lineno, fields))
        else:
            problems.append(f"line {lineno}: unknown statement {kind!r}")

    segments: dict[str, RoadSegment] = {}
    declared: set[str] = set()
    for lineno, fields in raw_segments:
        _, seg_id, a, b, limit_s, way = fields
        if seg_id in declared:
            problems.append(f"line {lineno}: duplicate segment id {seg_id!r}")
            continue
        declared.add(seg_id)
        if a not in junctions or b not in junctions:
            problems.append(f"line {lineno}: segment {seg_id!r} references unknown junction")
            continue
        try:
            limit = float(limit_s)
        except ValueError:
            problems.append(f"line {lineno}: speed limit must be numeric")
            continue
        if limit <= 0:
            problems.append(f"line {lineno}: segment {seg_id!r} violates speed_limit > 0")
            continue
        if way not in ("oneway", "twoway"):
            problems.append(f"line {lineno}: direction must be oneway or twoway")
            continue
        seg = RoadSegment(seg_id, a, b, junctions[a], junctions[b], limit, way == "oneway")
        if seg.length <= 0:
            problems.append(f"line {lineno}: segment {seg_id!r} violates length > 0")
            continue
        segments[seg_id] = seg

    if problems:
        raise DocumentError(problems)
    return RoadNetwork(junctions, segments)


def grid_document(rows: int, cols: int, spacing: float = 300.0, speed_limit: float = 50.0) -> str:
    """Road document text for a rows x cols junction grid, two-way streets."""
    lines = [f"# {rows}x{cols} grid, {spacing} m blocks"]
    for r in range(rows):
        for c in range(cols):
            lines.append(f"junction j{r}_{c} {c * spacing} {r * spacing}")
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                lines.append(f"segment h{r}_{c} j{r}_{c} j{r}_{c + 1} {speed_limit} twoway")
            if r + 1 < rows:
                lines.append(f"segment v{r}_{c} j{r}_{c} j{r + 1}_{c} {speed_limit} twoway")
    return "\n".join(lines) + "\n"


@dataclass
class VehicleState:
    node_id: str
    segment_id: str
    direction: str            # FORWARD or REVERSE on segment_id
    offset: float             # meters travelled from the entry end
    speed: float = 0.0        # km/h
    ignition: bool = True
    battery: str = "very_high"

    def position(self, network: RoadNetwork) -> GeoCoordinate:
        return network.segments[self.segment_id].point_at(self.offset, self.direction)


@dataclass
class MobilityDirective:
    """Per-tick control input: target speed and queued turns at junctions."""
    speed: float                       # km/h
    turns: list[str] = field(default_factory=list)


@dataclass
class MobilityTrace:
    node_id: str
    samples: list[tuple[float, VehicleState]] = field(default_factory=list)


def validate_trace(trace: MobilityTrace, network: RoadNetwork, slack: float = 0.10) -> list[str]:
    """Check timestamp ordering and speed/position consistency (10% slack)."""
    problems = []
    prev_t, prev_state = None, None
    for t, state in trace.samples:
        if prev_t is not None:
            if t <= prev_t:
                problems.append(f"timestamps not strictly increasing at t={t}")
            else:
                moved = distance(prev_state.position(network), state.position(network))
                allowed = (prev_state.speed / 3.6) * (t - prev_t) * (1 + slack) + 1e-6
                if moved > allowed:
                    problems.append(f"jump of {moved:.2f} m at t={t} exceeds speed budget")
        prev_t, prev_state = t, state
    return problems


def _enter_segment(network: RoadNetwork, junction: str, segment_id: str) -> str:
    """Direction of travel when entering `segment_id` at `junction`."""
    seg = network.segments[segment_id]
    if seg.junction_a == junction:
        return FORWARD
    if seg.junction_b == junction:
        if seg.oneway:
            raise DirectiveError(f"segment {segment_id!r} is one-way, cannot enter at {junction!r}")
        return REVERSE
    raise DirectiveError(f"segment {segment_id!r} is not adjacent to junction {junction!r}")


def advance_vehicle(state: VehicleState, network: RoadNetwork, dt: float,
                    directive: MobilityDirective) -> VehicleState:
    """Advance along the heading segment by speed*dt, turning per directive.

    Turns are consumed from directive.turns as junctions are crossed; with
    no turn queued the vehicle clamps at the segment end.  Deterministic:
    identical inputs give bit-identical outputs.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not state.ignition or directive.speed <= 0:
        return replace(state, speed=0.0 if not state.ignition else directive.speed)

    remaining = directive.speed / 3.6 * dt
    seg = network.segments[state.segment_id]
    segment_id, direction, offset = state.segment_id, state.direction, state.offset
    turns = list(directive.turns)

    while True:
        to_end = seg.length - offset
        if remaining < to_end or (remaining == to_end and not turns):
            offset += remaining
            break
        remaining -= to_end
        junction = seg.exit_junction(direction)
        if not turns:
            offset = seg.length  # clamp at segment end
            break
        segment_id = turns.pop(0)
        direction = _enter_segment(network, junction, segment_id)
        seg = network.segments[segment_id]
        offset = 0.0

    directive.turns[:] = turns
    return replace(state, segment_id=segment_id, direction=direction,
                   offset=offset, speed=directive.speed)


def shortest_path(network: RoadNetwork, start: str, goal: str,
                  weight: Callable[[RoadSegment, str], float],
                  respect_oneway: bool = True) -> tuple[list[str], float] | None:
    """Dijkstra over junctions; returns (segment id path, cost) or None.

    `weight(segment, direction)` prices one traversal.  Ties break on
    junction id so results are deterministic.
    """
    dist: dict[str, float] = {start: 0.0}
    prev: dict[str, tuple[str, str]] = {}
    heap: list[tuple[float, str]] = [(0.0, start)]
    done: set[str] = set()
    while heap:
        d, here = heapq.heappop(heap)
        if here in done:
            continue
        done.add(here)
        if here == goal:
            break
        for seg_id in network.segments_at(here):
            seg = network.segments[seg_id]
            try:
                direction = _enter_segment(network, here, seg_id)
            except DirectiveError:
                if respect_oneway:
                    continue
                direction = REVERSE
            nxt = seg.exit_junction(direction)
            nd = d + weight(seg, direction)
            if nxt not in dist or nd < dist[nxt]:
                dist[nxt] = nd
                prev[nxt] = (here, seg_id)
                heapq.heappush(heap, (nd, nxt))
    if goal not in dist:
        return None
    path: list[str] = []
    here = goal
    while here != start:
        came_from, seg_id = prev[here]
        path.append(seg_id)
        here = came_from
    path.reverse()
    return path, dist[goal]


@dataclass(frozen=True)
class SnapPoint:
    segment_id: str
    offset_from_a: float      # meters from junction_a along the segment axis
    point: GeoCoordinate
    gap: float                # distance from the query point to the road


def snap_to_network(network: RoadNetwork, coord: GeoCoordinate) -> SnapPoint:
    """Nearest point on any segment; ties break on segment id."""
    best: SnapPoint | None = None
    for seg_id in sorted(network.segments):
        seg = network.segments[seg_id]
        ax, ay = seg.start.x, seg.start.y
        dx, dy = seg.end.x - ax, seg.end.y - ay
        denom = dx * dx + dy * dy
        t = 0.0 if denom == 0 else max(0.0, min(1.0, ((coord.x - ax) * dx + (coord.y - ay) * dy) / denom))
        pt = GeoCoordinate(ax + dx * t, ay + dy * t)
        gap = distance(coord, pt)
        if best is None or gap < best.gap:
            best = SnapPoint(seg_id, t * seg.length, pt, gap)
    if best is None:
        raise ValueError("network has no segments")
    return best


def path_between_points(network: RoadNetwork, origin: GeoCoordinate, target: GeoCoordinate,
                        weight: Callable[[RoadSegment, str], float] | None = None,
                        respect_oneway: bool = False) -> tuple[list[GeoCoordinate], float]:
    """Shortest polyline over the network between two off-network points.

    Endpoints are snapped to their nearest segment point; the search runs
    over junctions augmented with the two snap points.  Default weight is
    segment length (walking cost).
    """
    if weight is None:
        weight = lambda seg, direction: seg.length

    snap_o = snap_to_network(network, origin)
    snap_t = snap_to_network(network, target)

    # Virtual nodes: each snap point links to its segment's two junctions
    # with the partial weight; same-segment snaps also link directly.
    dist_graph: dict[str, list[tuple[str, float, GeoCoordinate]]] = {}

    def add_edge(a: str, b: str, w: float, b_coord: GeoCoordinate) -> None:
        dist_graph.setdefault(a, []).append((b, w, b_coord))

    def partial_weight(seg: RoadSegment, meters: float, direction: str) -> float:
        if seg.length == 0:
            return 0.0
        return weight(seg, direction) * (meters / seg.length)

    for j, seg_ids in network.adjacency.items():
        for seg_id in seg_ids:
            seg = network.segments[seg_id]
            try:
                direction = _enter_segment(network, j, seg_id)
            except DirectiveError:
                if respect_oneway:
                    continue
                direction = REVERSE
            other = seg.exit_junction(direction)
            add_edge(j, other, weight(seg, direction), network.junctions[other])

    for label, snap in (("@origin", snap_o), ("@target", snap_t)):
        seg = network.segments[snap.segment_id]
        add_edge(label, seg.junction_a, partial_weight(seg, snap.offset_from_a, REVERSE),
                 network.junctions[seg.junction_a])
        add_edge(seg.junction_a, label, partial_weight(seg, snap.offset_from_a, FORWARD), snap.point)
        rest = seg.length - snap.offset_from_a
        add_edge(label, seg.junction_b, partial_weight(seg, rest, FORWARD),
                 network.junctions[seg.junction_b])
        add_edge(seg.junction_b, label, partial_weight(seg, rest, REVERSE), snap.point)

    if snap_o.segment_id == snap_t.segment_id:
        seg = network.segments[snap_o.segment_id]
        along = abs(snap_t.offset_from_a - snap_o.offset_from_a)
        add_edge("@origin", "@target", partial_weight(seg, along, FORWARD), snap_t.point)
        add_edge("@target", "@origin", partial_weight(seg, along, FORWARD), snap_o.point)

    coords: dict[str, GeoCoordinate] = {"@origin": snap_o.point, "@target": snap_t.point}
    coords.update(network.junctions)

    dist: dict[str, float] = {"@origin": 0.0}
    prev: dict[str, str] = {}
    heap: list[tuple[float, str]] = [(0.0, "@origin")]
    done: set[str] = set()
    while heap:
        d, here = heapq.heappop(heap)
        if here in done:
            continue
        done.add(here)
        if here == "@target":
            break
        for nxt, w, _ in sorted(dist_graph.get(here, []), key=lambda e: e[0]):
            nd = d + w
            if nxt not in dist or nd < dist[nxt]:
                dist[nxt] = nd
                prev[nxt] = here
                heapq.heappush(heap, (nd, nxt))

    if "@target" not in dist:
        raise ValueError("no path between points")

    names = ["@target"]
    while names[-1] != "@origin":
        names.append(prev[names[-1]])
    names.reverse()
    points = [coords[n] for n in names]
    # Drop zero-length duplicates from snapping exactly onto a junction.
    deduped = [points[0]]
    for pt in points[1:]:
        if distance(pt, deduped[-1]) > 0:
            deduped.append(pt)
    return deduped, dist["@target"]
