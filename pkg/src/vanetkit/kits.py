"""Ready-made scenario bundles for the four desk-scale field tests.

Each kit writes a self-contained bundle directory: road document,
roster, scenario file and (for the advertising kit) an advert package.

    congestion-chain  detector + corroborator + downstream receiver
    parking           a leaving car announces its space to a searcher
    find-car          park, walk away, query the walking route
    advert            geolocated advertising shown inside its area

`demo_bundle` additionally generates a large random scenario (grid
city, background fleet, scripted jam) for throughput and metrics runs.
"""

from __future__ import annotations

import os
import random

from .geomodel import grid_document
from .trust import load_roster

KIT_NAMES = ("congestion-chain", "parking", "find-car", "advert")

_CHAIN_ROAD = """# straight main road with a low-limit side street
junction a 0 0
junction m 330 0
junction b 600 0
junction s 330 50
segment main1 a m 50 twoway
segment main2 m b 50 twoway
segment side m s 20 twoway
"""

_CHAIN_ROSTER = """# D and C share F1; C and R share F2; D and R share nobody
user ud 101
user uc 102
user ur 103
user uf1 104
user uf2 105
friend ud uf1
friend uc uf1
friend uc uf2
friend ur uf2
"""

_CHAIN_SCENARIO = """name congestion-chain
seed 42
duration 120
# jam on main1: everyone on it crawls at 2 km/h from the start
vehicle D user=ud segment=main1 offset=260 dir=fwd speed=50
vehicle C user=uc segment=main1 offset=290 dir=fwd speed=50
vehicle R user=ur segment=side offset=10 dir=fwd speed=0
congestion_zone main1 fwd 0 120 2
road road.txt
roster roster.txt
"""

_PARKING_ROAD = """# low-limit street: parked traffic must not look like congestion
junction a 0 0
junction b 400 0
segment main a b 20 twoway
"""

_PARKING_ROSTER = """user up 201
user us 202
user uf 203
friend up uf
friend us uf
"""

_PARKING_SCENARIO = """name parking
seed 42
duration 100
# P parks at t=10 and leaves the space at t=30; S is hunting for one.
vehicle P user=up segment=main offset=100 dir=fwd speed=0
vehicle S user=us segment=main offset=130 dir=fwd speed=0 searcher
park P 10 30
road road.txt
roster roster.txt
"""

_FINDCAR_ROSTER = """user up 301
"""

_FINDCAR_SCENARIO = """name find-car
seed 42
duration 80
# drive one block east, clamp at the junction, park there, then query the
# walking route from the far corner of the grid
vehicle P user=up segment=h0_0 offset=0 dir=fwd speed=36
park P 20 9999
find P 60 450 300
road road.txt
roster roster.txt
"""

_ADVERT_ROAD = """junction a 0 0
junction b 600 0
segment main a b 50 twoway
"""

_ADVERT_ROSTER = """user ushop 401
user ucar 402
user uf 403
friend ushop uf
friend ucar uf
"""

_ADVERT_SCENARIO = """name advert
seed 42
duration 60
vehicle SHOP user=ushop segment=main offset=300 dir=fwd speed=0
vehicle CAR user=ucar segment=main offset=0 dir=fwd speed=36
advertise SHOP advert.txt
road road.txt
roster roster.txt
"""


def _write(path: str, content: str) -> None:
    with open(path, "w") as fh:
        fh.write(content)


def _advert_package(roster_text: str) -> str:
    """Advert package whose certificate matches the kit's roster keys."""
    roster = load_roster(roster_text)
    cert = roster.user("ushop").self_certificate
    return ("advert ushop 300 0 120 55 coffee two for one\n"
            "logo shopfront\n"
            f"cert {cert.subject} {cert.signer} {cert.signature.hex()}\n")


def generate_kit(name: str, directory: str) -> list[str]:
    """Write the named kit's bundle files; returns the paths written."""
    if name not in KIT_NAMES:
        raise ValueError(f"unknown kit {name!r}; available: {', '.join(KIT_NAMES)}")
    os.makedirs(directory, exist_ok=True)
    files: dict[str, str] = {}
    if name == "congestion-chain":
        files = {"road.txt": _CHAIN_ROAD, "roster.txt": _CHAIN_ROSTER,
                 "scenario.txt": _CHAIN_SCENARIO}
    elif name == "parking":
        files = {"road.txt": _PARKING_ROAD, "roster.txt": _PARKING_ROSTER,
                 "scenario.txt": _PARKING_SCENARIO}
    elif name == "find-car":
        files = {"road.txt": grid_document(3, 4, spacing=150.0, speed_limit=50.0),
                 "roster.txt": _FINDCAR_ROSTER, "scenario.txt": _FINDCAR_SCENARIO}
    elif name == "advert":
        files = {"road.txt": _ADVERT_ROAD, "roster.txt": _ADVERT_ROSTER,
                 "scenario.txt": _ADVERT_SCENARIO,
                 "advert.txt": _advert_package(_ADVERT_ROSTER)}
    written = []
    for filename, content in files.items():
        path = os.path.join(directory, filename)
        _write(path, content)
        written.append(path)
    return sorted(written)


def demo_roster_text(user_count: int, friends_per_user: int = 3, seed: int = 9) -> str:
    """Random social graph: every user befriends a few later users."""
    rng = random.Random(f"roster-{seed}")
    lines = [f"user u{i:05d} {1000 + i}" for i in range(user_count)]
    pairs = set()
    for i in range(user_count):
        for _ in range(friends_per_user):
            j = rng.randrange(user_count)
            if i != j:
                pairs.add((min(i, j), max(i, j)))
    lines += [f"friend u{a:05d} u{b:05d}" for a, b in sorted(pairs)]
    return "\n".join(lines) + "\n"


def demo_bundle(directory: str, vehicle_count: int = 600, duration: int = 300,
                seed: int = 42, grid: int = 8, spacing: float = 300.0) -> str:
    """Large random scenario: grid city, background fleet, one scripted jam."""
    os.makedirs(directory, exist_ok=True)
    _write(os.path.join(directory, "road.txt"),
           grid_document(grid, grid, spacing=spacing, speed_limit=50.0))
    _write(os.path.join(directory, "roster.txt"), demo_roster_text(vehicle_count, seed=seed))
    scenario = (
        f"name demo\nseed {seed}\nduration {duration}\n"
        f"vehicle_count {vehicle_count}\n"
        "congestion_zone h0_0 fwd 30 240 3\n"
        "congestion_zone h0_1 fwd 30 240 3\n"
        "road road.txt\nroster roster.txt\n")
    _write(os.path.join(directory, "scenario.txt"), scenario)
    return directory
