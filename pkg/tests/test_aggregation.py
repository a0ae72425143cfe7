import random

import pytest

from vanetkit import trust
from vanetkit.aggregation import (AggregatedEvent, JourneyContactLog,
                                  SignedObservation, assemble_aggregate,
                                  avg_users_per_minute, canonical_observation,
                                  corroborate, event_id_for, required_signatures,
                                  sign_observation, verify_aggregate)
from vanetkit.events import CongestionObservation
from vanetkit.geomodel import FORWARD, GeoCoordinate
from vanetkit.trust import RevocationStore, Roster


def oracle_required(rate):
    """Independent case analysis of the adaptive threshold."""
    if rate is None:
        return 2
    if rate < 1.0:
        return 2
    if rate <= 4.0:
        return 4
    return 5


def test_threshold_paper_values():
    assert required_signatures(0.5) == 2
    assert required_signatures(2.0) == 4
    assert required_signatures(5.0) == 5
    assert required_signatures(1.0) == 4
    assert required_signatures(4.0) == 4
    assert required_signatures(None) == 2


def test_threshold_matches_oracle_on_random_rates():
    rng = random.Random(1)
    for _ in range(10000):
        rate = rng.uniform(0.0, 8.0) if rng.random() < 0.95 else rng.choice([0.0, 1.0, 4.0, None])
        assert required_signatures(rate) == oracle_required(rate)


def test_avg_users_per_minute():
    log = JourneyContactLog()
    assert avg_users_per_minute(log, 100.0) is None
    log.record("a", 0.0)
    log.record("b", 60.0)
    log.record("c", 120.0)
    assert avg_users_per_minute(log, 360.0) == pytest.approx(0.5)   # 3 peers / 6 min
    log2 = JourneyContactLog()
    for i in range(8):
        log2.record(f"p{i}", 0.0)
    assert avg_users_per_minute(log2, 120.0) == pytest.approx(4.0)  # 8 peers / 2 min
    log3 = JourneyContactLog()
    log3.record("only", 50.0)
    assert avg_users_per_minute(log3, 50.0) == pytest.approx(60.0)  # floored at 1 s


def observation(road="r1", direction=FORWARD, x=150.0, y=40.0, t=500.0,
                pseudonym=b"o" * 16):
    return CongestionObservation(road, direction, GeoCoordinate(x, y), t, pseudonym)


def signer(roster, uid, seed):
    ident = roster.register(uid, seed)
    return ident


def sign_as(ident, obs, pseudonym):
    return sign_observation(obs, ident.keys.private_key, ident.self_certificate, pseudonym)


def test_canonical_encoding_is_stable_and_cell_quantized():
    obs_a = observation(x=150.0, y=40.0, t=500.0)
    obs_b = observation(x=190.0, y=10.0, t=530.0)     # same 200 m cell, same minute bucket
    obs_c = observation(x=210.0, y=40.0, t=500.0)     # next cell over
    assert canonical_observation(obs_a) == canonical_observation(obs_b)
    assert canonical_observation(obs_a) != canonical_observation(obs_c)
    assert event_id_for(obs_a) == event_id_for(obs_b)
    # Byte-exact layout: length-prefixed road, direction, two cells, minute.
    encoded = canonical_observation(obs_a)
    assert encoded[:2] == b"\x00\x02" and encoded[2:4] == b"r1"
    assert encoded[4] == 0
    assert int.from_bytes(encoded[5:13], "big") == 0       # cell_x = floor(150/200)
    assert int.from_bytes(encoded[13:21], "big") == 0      # cell_y
    assert int.from_bytes(encoded[21:29], "big") == 8      # floor(500/60)


def test_corroborate_requires_matching_cell():
    roster = Roster()
    ident = signer(roster, "w", 1)
    obs = observation()
    same_cell = observation(x=120.0, pseudonym=b"w" * 16)
    other_road = observation(road="r2", pseudonym=b"w" * 16)
    assert corroborate(obs, same_cell, ident.keys.private_key,
                       ident.self_certificate, b"w" * 16) is not None
    assert corroborate(obs, other_road, ident.keys.private_key,
                       ident.self_certificate, b"w" * 16) is None
    assert corroborate(obs, None, ident.keys.private_key,
                       ident.self_certificate, b"w" * 16) is None


def test_corroborator_signs_the_received_observation():
    roster = Roster()
    ident = signer(roster, "w", 1)
    obs = observation()
    own = observation(x=130.0, pseudonym=b"w" * 16)
    signed = corroborate(obs, own, ident.keys.private_key, ident.self_certificate, b"w" * 16)
    assert signed.observation == obs
    assert signed.verify()


def test_assemble_low_density_with_two_signatures():
    roster = Roster()
    promoter = signer(roster, "p", 1)
    helper = signer(roster, "h", 2)
    obs = observation(pseudonym=b"p" * 16)
    sigs = [sign_as(promoter, obs, b"p" * 16), sign_as(helper, obs, b"h" * 16)]
    event = assemble_aggregate(obs, sigs, rate=0.5, promoter_pseudonym=b"p" * 16, now=510.0)
    assert event is not None
    assert len(event.signatures) == 2
    assert event.threshold == 2


def test_assemble_insufficient_for_mid_density():
    roster = Roster()
    idents = [signer(roster, f"u{i}", i) for i in range(3)]
    obs = observation(pseudonym=b"0" * 16)
    sigs = [sign_as(ident, obs, f"{i}".encode() * 16) for i, ident in enumerate(idents)]
    assert assemble_aggregate(obs, sigs, rate=2.0, promoter_pseudonym=b"0" * 16, now=0.0) is None


def test_duplicate_certificate_counted_once():
    roster = Roster()
    promoter = signer(roster, "p", 1)
    obs = observation(pseudonym=b"p" * 16)
    sigs = [sign_as(promoter, obs, b"p" * 16), sign_as(promoter, obs, b"q" * 16)]
    assert assemble_aggregate(obs, sigs, rate=0.5, promoter_pseudonym=b"p" * 16, now=0.0) is None


def accepted_event(rate=0.5):
    roster = Roster()
    promoter = signer(roster, "p", 1)
    helper = signer(roster, "h", 2)
    obs = observation(pseudonym=b"p" * 16)
    sigs = [sign_as(promoter, obs, b"p" * 16), sign_as(helper, obs, b"h" * 16)]
    return assemble_aggregate(obs, sigs, rate, b"p" * 16, 510.0), roster


def test_verify_accepts_well_formed_event():
    event, roster = accepted_event()
    ok, reason = verify_aggregate(event, RevocationStore(set(roster.users)))
    assert ok, reason


def test_verify_rejects_flipped_signature_byte():
    event, roster = accepted_event()
    victim = event.signatures[1]
    bad_sig = bytes([victim.signature[0] ^ 1]) + victim.signature[1:]
    tampered = AggregatedEvent(
        event.observation,
        (event.signatures[0],
         SignedObservation(victim.observation, victim.signer_pseudonym,
                           victim.signer_certificate, bad_sig)),
        event.promoter_pseudonym, event.created_at, event.rate, event.threshold)
    ok, reason = verify_aggregate(tampered, RevocationStore())
    assert not ok and reason == "bad-signature"


def test_verify_rejects_revoked_signer():
    event, roster = accepted_event()
    store = RevocationStore(set(roster.users))
    for _ in range(3):
        store.report("h")
    ok, reason = verify_aggregate(event, store)
    assert not ok and reason == "revoked-signer"


def test_verify_enforces_global_minimum_threshold():
    """A crafted packet claiming threshold 1 still needs two signers."""
    roster = Roster()
    attacker = signer(roster, "evil", 66)
    obs = observation(pseudonym=b"e" * 16)
    one_sig = (sign_as(attacker, obs, b"e" * 16),)
    crafted = AggregatedEvent(obs, one_sig, b"e" * 16, 0.0, rate=0.01, threshold=1)
    ok, reason = verify_aggregate(crafted, RevocationStore())
    assert not ok and reason == "insufficient-signatures"


def test_single_attacker_with_many_pseudonyms_never_accepted():
    """One key pair plus any number of pseudonyms cannot pass threshold 2."""
    rng = random.Random(5)
    roster = Roster()
    attacker = signer(roster, "sybil", 13)
    obs = observation(pseudonym=b"a" * 16)
    store = RevocationStore()
    for _ in range(300):
        pseudonyms = [rng.randbytes(16) for _ in range(rng.randrange(1, 11))]
        sigs = tuple(sign_as(attacker, obs, p) for p in pseudonyms)
        claimed_rate = rng.choice([None, 0.0, 0.5, 3.0, 9.0])
        claimed_threshold = rng.randrange(0, 6)
        crafted = AggregatedEvent(obs, sigs, pseudonyms[0], 0.0,
                                  claimed_rate, claimed_threshold)
        ok, _ = verify_aggregate(crafted, store)
        assert not ok


def test_soundness_random_signature_multisets():
    """Below-threshold distinct certificates never verify, duplicates included."""
    rng = random.Random(6)
    roster = Roster()
    idents = [signer(roster, f"s{i}", 100 + i) for i in range(6)]
    obs = observation(pseudonym=b"x" * 16)
    store = RevocationStore()
    for _ in range(200):
        chosen = [idents[rng.randrange(len(idents))] for _ in range(rng.randrange(1, 8))]
        sigs = tuple(sign_as(ident, obs, rng.randbytes(16)) for ident in chosen)
        rate = rng.choice([0.5, 2.0, 5.0])
        threshold = required_signatures(rate)
        crafted = AggregatedEvent(obs, sigs, b"x" * 16, 0.0, rate, threshold)
        ok, _ = verify_aggregate(crafted, store)
        distinct = len({ident.user_id for ident in chosen})
        distinct_pseudonym_ok = len({s.signer_pseudonym for s in sigs}) == len(sigs)
        expected = distinct == len(chosen) and distinct >= threshold and distinct_pseudonym_ok
        assert ok == expected


def test_verifier_independence():
    event, roster = accepted_event()
    a = RevocationStore(set(roster.users))
    b = RevocationStore(set(roster.users))
    assert verify_aggregate(event, a) == verify_aggregate(event, b)
    a.report("h")
    trust.exchange_revocations(a, b)
    assert verify_aggregate(event, a) == verify_aggregate(event, b)
