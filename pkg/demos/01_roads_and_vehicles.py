#!/usr/bin/env python3
"""Roads, kinematics and walking routes.

Builds a small grid city, drives a vehicle through a junction turn, and
asks for the walking route back to a parked car.
"""

from vanetkit import (FORWARD, GeoCoordinate, MobilityDirective, VehicleState,
                      advance_vehicle, distance, grid_document, load_network,
                      walking_route)
from vanetkit.events import ParkedLocation

# A 4x4 grid of junctions, 300 m blocks, 50 km/h streets.  The document
# format is plain text, one junction or segment per line.
doc = grid_document(4, 4, spacing=300.0, speed_limit=50.0)
print(doc.splitlines()[1], "...")
net = load_network(doc)
print(f"{len(net.junctions)} junctions, {len(net.segments)} segments")

# Drive east at 36 km/h (10 m/s) starting on the bottom-left street.
state = VehicleState("demo-car", "h0_0", FORWARD, offset=0.0)
directive = MobilityDirective(36.0, turns=["h0_1", "v0_2"])
for t in range(40):
    state = advance_vehicle(state, net, 1.0, directive)
pos = state.position(net)
print(f"after 40 s: segment={state.segment_id} offset={state.offset:.0f} m "
      f"position=({pos.x:.0f}, {pos.y:.0f})")

# Park there, walk two blocks away, and ask for the route back.
parked = ParkedLocation(pos, parked_at=40.0)
here = GeoCoordinate(900.0, 900.0)
path, length = walking_route(here, parked, net)
print(f"walking route: {length:.0f} m in {len(path)} waypoints")
print(f"  straight-line distance would be {distance(here, parked.location):.0f} m")
