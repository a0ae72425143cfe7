"""Incident detection and the node-local event store.

Congestion is flagged when a vehicle sustains an abnormally low speed
(below a configurable fraction of the segment limit) for a full window;
parking vacancies are announced when a previously parked vehicle starts
up with a GPS fix.  Stored events expire on short TTLs and the store is
pruned every tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .geomodel import (GeoCoordinate, RoadNetwork, VehicleState, distance,
                       path_between_points)
from .trust import Certificate


@dataclass(frozen=True)
class DetectionConfig:
    speed_fraction: float = 0.4    # abnormal = slower than this fraction of the limit
    sustain_window: float = 60.0   # seconds the abnormal speed must hold
    min_limit: float = 30.0        # km/h; slower roads never trigger detection
    cooldown: float = 300.0        # seconds between observations per road+direction
    parking_ttl: float = 60.0      # seconds a vacancy announcement stays visible
    congestion_ttl: float = 900.0  # seconds an accepted congestion event is retained
    cell_size: float = 200.0       # meters; same road+direction+cell = same event

    def __post_init__(self) -> None:
        if not (0.0 < self.speed_fraction < 1.0):
            raise ValueError("speed_fraction must be in (0, 1)")
        if self.sustain_window <= 0:
            raise ValueError("sustain_window must be positive")


@dataclass(frozen=True)
class CongestionObservation:
    road_id: str
    direction: str
    location: GeoCoordinate
    detected_at: float
    observer_pseudonym: bytes


@dataclass(frozen=True)
class ParkingEvent:
    location: GeoCoordinate
    announced_at: float
    ttl: float = 60.0

    def visible(self, now: float) -> bool:
        # Inclusive boundary: still visible at exactly announced_at + ttl.
        return now <= self.announced_at + self.ttl


@dataclass(frozen=True)
class ParkedLocation:
    location: GeoCoordinate
    parked_at: float


@dataclass(frozen=True)
class AdvertEvent:
    company_name: str
    message: str                  # capped at 140 characters
    location: GeoCoordinate
    area_radius: float
    expiration: float
    logo_ref: str
    certificate: Certificate

    def __post_init__(self) -> None:
        if len(self.message) > 140:
            raise ValueError("advert message exceeds 140 characters")


def location_cell(coord: GeoCoordinate, cell_size: float = 200.0) -> tuple[int, int]:
    return (math.floor(coord.x / cell_size), math.floor(coord.y / cell_size))


def evaluate_window(window: list[tuple[float, VehicleState, float]],
                    config: DetectionConfig) -> bool:
    """True when the samples satisfy the sustained-low-speed predicate.

    Each sample is (time, state, segment speed limit).  All samples must
    share the current road and direction, span at least the sustain
    window, keep the ignition on, and every speed must stay below the
    configured fraction of a limit that itself is at least min_limit.
    """
    if len(window) < 2:
        return False
    t0 = window[0][0]
    t1, last, limit = window[-1]
    if t1 - t0 < config.sustain_window:
        return False
    if limit < config.min_limit:
        return False
    road, direction = last.segment_id, last.direction
    for _, state, sample_limit in window:
        if not state.ignition:
            return False
        if state.segment_id != road or state.direction != direction:
            return False
        if state.speed >= config.speed_fraction * sample_limit:
            return False
    return True


class CongestionDetector:
    """Per-node sliding window over recent samples, with emission cooldown."""

    def __init__(self, config: DetectionConfig, has_gps: bool = True):
        self.config = config
        self.has_gps = has_gps
        self.window: list[tuple[float, VehicleState, float]] = []
        self.last_emitted: dict[tuple[str, str], float] = {}

    def push(self, now: float, state: VehicleState, network: RoadNetwork) -> None:
        if not self.has_gps:
            return
        limit = network.segments[state.segment_id].speed_limit
        if self.window:
            _, prev, _ = self.window[-1]
            if prev.segment_id != state.segment_id or prev.direction != state.direction:
                self.window.clear()
        self.window.append((now, state, limit))
        # Keep the shortest suffix still spanning the sustain window.
        while len(self.window) >= 2 and self.window[1][0] <= now - self.config.sustain_window:
            self.window.pop(0)

    def firing(self) -> bool:
        """Sustained-low-speed predicate holds right now, cooldown aside."""
        return evaluate_window(self.window, self.config)

    def detect_candidate(self, now: float, network: RoadNetwork,
                         observer_pseudonym: bytes) -> CongestionObservation | None:
        """Current observation candidate, ignoring the emission cooldown."""
        if not self.firing():
            return None
        _, state, _ = self.window[-1]
        return CongestionObservation(state.segment_id, state.direction,
                                     state.position(network), now, observer_pseudonym)

    def detect(self, now: float, network: RoadNetwork,
               observer_pseudonym: bytes) -> CongestionObservation | None:
        """Emit at most one observation per road+direction per cooldown."""
        candidate = self.detect_candidate(now, network, observer_pseudonym)
        if candidate is None:
            return None
        key = (candidate.road_id, candidate.direction)
        last = self.last_emitted.get(key)
        if last is not None and now - last < self.config.cooldown:
            return None
        self.last_emitted[key] = now
        return candidate


class ParkingMonitor:
    """Tracks the parked location and raises vacancy events on startup."""

    def __init__(self, ttl: float = 60.0, has_gps: bool = True):
        self.ttl = ttl
        self.has_gps = has_gps
        self.parked: ParkedLocation | None = None

    def ignition_off(self, now: float, position: GeoCoordinate) -> ParkedLocation | None:
        if not self.has_gps:
            return None  # no fix: nothing stored, find-car will report unavailable
        self.parked = ParkedLocation(position, now)
        return self.parked

    def ignition_on(self, now: float) -> ParkingEvent | None:
        if self.parked is None or not self.has_gps:
            return None
        return ParkingEvent(self.parked.location, now, self.ttl)


def store_parked_location(monitor: ParkingMonitor, now: float,
                          position: GeoCoordinate) -> ParkedLocation | None:
    return monitor.ignition_off(now, position)


def detect_parking_vacancy(monitor: ParkingMonitor, now: float) -> ParkingEvent | None:
    return monitor.ignition_on(now)


class EventStore:
    """Node-local store of received events, pruned by TTL."""

    def __init__(self, config: DetectionConfig):
        self.config = config
        self.parking: dict[bytes, ParkingEvent] = {}
        self.congestion: dict[bytes, tuple[object, float]] = {}   # id -> (event, stored_at)
        self.adverts: dict[bytes, AdvertEvent] = {}

    def add_parking(self, event_id: bytes, event: ParkingEvent) -> None:
        self.parking[event_id] = event

    def add_congestion(self, event_id: bytes, event: object, now: float) -> None:
        self.congestion[event_id] = (event, now)

    def add_advert(self, advert_id: bytes, advert: AdvertEvent) -> None:
        self.adverts[advert_id] = advert

    def visible_parking(self, now: float) -> list[tuple[bytes, ParkingEvent]]:
        return [(eid, ev) for eid, ev in sorted(self.parking.items()) if ev.visible(now)]

    def expire(self, now: float) -> list[tuple[str, bytes]]:
        """Prune expired events; returns (kind, id) for each removal."""
        gone: list[tuple[str, bytes]] = []
        for eid in [e for e, ev in self.parking.items() if now > ev.announced_at + ev.ttl]:
            del self.parking[eid]
            gone.append(("parking", eid))
        for eid in [e for e, (_, t0) in self.congestion.items()
                    if now > t0 + self.config.congestion_ttl]:
            del self.congestion[eid]
            gone.append(("congestion", eid))
        for eid in [e for e, ad in self.adverts.items() if now >= ad.expiration]:
            del self.adverts[eid]
            gone.append(("advert", eid))
        return gone


def expire_events(store: EventStore, now: float) -> list[tuple[str, bytes]]:
    return store.expire(now)


def walking_route(current: GeoCoordinate, parked: ParkedLocation | None,
                  network: RoadNetwork) -> tuple[list[GeoCoordinate], float] | None:
    """Shortest walking path to the parked car; None when nothing is stored.

    All segments are treated as two-way at length cost; both endpoints
    snap to the nearest point of the road network.
    """
    if parked is None:
        return None
    if distance(current, parked.location) == 0:
        return [current], 0.0
    return path_between_points(network, current, parked.location, respect_oneway=False)


def deliver_advert(advert: AdvertEvent, receiver: GeoCoordinate, now: float,
                   filters: set[str] | None = None,
                   signer_key: Callable[[str], bytes | None] | None = None) -> bool:
    """True when the advert should be shown to this receiver.

    The certificate must verify (self-certified adverts verify against
    their embedded key; otherwise `signer_key` resolves the signer),
    the receiver must sit inside the area of interest, the advert must
    be unexpired and its company must pass the receiver's filters.
    Raises ValueError on an invalid certificate so callers can report
    the source.
    """
    cert = advert.certificate
    if cert.signer == cert.subject:
        key = cert.subject_public_key
    else:
        key = signer_key(cert.signer) if signer_key else None
    if key is None or not cert.verify(key):
        raise ValueError(f"advert certificate from {cert.subject!r} does not verify")
    if now >= advert.expiration:
        return False
    if distance(receiver, advert.location) > advert.area_radius:
        return False
    if filters is not None and advert.company_name not in filters:
        return False
    return True
