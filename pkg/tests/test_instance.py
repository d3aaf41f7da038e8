import json
import math
import random

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from banopt.instance import (ArcClass, EnergyParams, GenerationError, GeneratorProfile,
                             InstanceInvariantError, InstanceSchemaError, build_arcs,
                             energy_coefficient, generate_instance, instance_to_dict, load_instance,
                             save_instance)

from helpers import toy

P = EnergyParams(tx_circ=16.7e-9, rx_circ=36.1e-9, tx_amp=1.97e-9)


def reference_energy(d, lam):
    """Transmit plus receive energy per bit at 50 significant digits."""
    with mpmath.workdps(50):
        circ = mpmath.mpf("16.7e-9") + mpmath.mpf("36.1e-9")
        return float(circ + mpmath.mpf("1.97e-9") * mpmath.power(mpmath.mpf(d), mpmath.mpf(lam)))


# ---- energy model -------------------------------------------------------

def test_energy_zero_distance_is_circuit_only():
    assert energy_coefficient(P, 0.0, 3.38) == pytest.approx(52.8e-9, rel=1e-12)


def test_energy_unit_distance():
    assert energy_coefficient(P, 1.0, 3.38) == pytest.approx(54.77e-9, rel=1e-12)


@pytest.mark.parametrize("d, lam", [("0.3", "3.38"), ("0.45", "2"), ("1.7", "4.1")])
def test_energy_matches_high_precision_value(d, lam):
    assert energy_coefficient(P, float(d), float(lam)) == pytest.approx(reference_energy(d, lam), rel=1e-14)


def test_energy_rejects_negative_distance():
    with pytest.raises(ValueError):
        energy_coefficient(P, -0.1, 3.38)


def test_energy_amplifier_per_exponent():
    params = EnergyParams(tx_amp={2.0: 1e-9, 3.38: 2e-9})
    assert energy_coefficient(params, 2.0, 2.0) == pytest.approx(52.8e-9 + 4e-9)
    with pytest.raises(InstanceInvariantError):
        energy_coefficient(params, 1.0, 4.0)


@given(st.floats(0.01, 2.0), st.floats(0.01, 2.0), st.floats(1.0, 6.0))
def test_energy_strictly_increasing_in_distance(d1, d2, lam):
    lo, hi = sorted((d1, d2))
    # below this separation the increment can vanish in double precision
    if hi - lo < 1e-3:
        return
    assert energy_coefficient(P, lo, lam) < energy_coefficient(P, hi, lam)


# ---- geometric arc rule ---------------------------------------------------

def test_biosensor_reaches_relay_within_range():
    arcs = build_arcs([(0.0, 0.0)], [(0.2, 0.0)], [(5.0, 5.0)], 0.45, 0.45, P, 3.38)
    br = [a for a in arcs if a.klass is ArcClass.B_TO_R]
    assert len(br) == 1 and br[0].distance == pytest.approx(0.2)


def test_far_relays_are_not_linked():
    arcs = build_arcs([], [(0.0, 0.0), (1.0, 0.0)], [], 0.45, 0.45, P, 3.38)
    assert [a for a in arcs if a.klass is ArcClass.R_TO_R] == []


def test_colocated_sink_gives_circuit_energy():
    arcs = build_arcs([(0.3, 0.3)], [], [(0.3, 0.3)], 0.45, 0.45, P, 3.38)
    assert len(arcs) == 1 and arcs[0].klass is ArcClass.B_TO_S
    assert arcs[0].energy == pytest.approx(P.tx_circ + P.rx_circ, rel=1e-15)


def _expected_arcs(bio, rel, snk, rb, rr):
    """Independent count of links by the geometric rule."""
    out = set()
    for i, p in enumerate(bio):
        for j, q in enumerate(rel):
            if math.dist(p, q) <= rb:
                out.add(("b", i, "r", j))
        for j, q in enumerate(snk):
            if math.dist(p, q) <= rb:
                out.add(("b", i, "s", j))
    for i, p in enumerate(rel):
        for j, q in enumerate(rel):
            if i != j and math.dist(p, q) <= rr:
                out.add(("r", i, "r", j))
        for j, q in enumerate(snk):
            if math.dist(p, q) <= rr:
                out.add(("r", i, "s", j))
    return out


@given(st.integers(0, 10_000))
def test_build_arcs_matches_geometric_rule(seed):
    rng = random.Random(seed)
    pts = lambda n: [(rng.random(), rng.random() * 1.5) for _ in range(n)]
    bio, rel, snk = pts(rng.randint(0, 4)), pts(rng.randint(0, 8)), pts(rng.randint(0, 2))
    rb, rr = rng.uniform(0.1, 0.8), rng.uniform(0.1, 0.8)
    arcs = build_arcs(bio, rel, snk, rb, rr, P, 3.38)
    got = {(a.tail.label[0], a.tail.index, a.head.label[0], a.head.index) for a in arcs}
    assert got == _expected_arcs(bio, rel, snk, rb, rr)
    assert len(got) == len(arcs)
    classes = {k: sum(a.klass is k for a in arcs) for k in ArcClass}
    assert sum(classes.values()) == len(arcs)
    for a in arcs:
        assert a.energy == energy_coefficient(P, a.distance, 3.38)


# ---- generation -------------------------------------------------------------

def test_generation_is_deterministic():
    a = generate_instance(7, GeneratorProfile.preset("mid"))
    b = generate_instance(7, GeneratorProfile.preset("mid"))
    assert json.dumps(instance_to_dict(a), sort_keys=True) == json.dumps(instance_to_dict(b), sort_keys=True)


def test_seed_changes_relay_layout():
    prof = GeneratorProfile.preset("mid")
    a, b = generate_instance(7, prof), generate_instance(8, prof)
    assert {r.position for r in a.relays} != {r.position for r in b.relays}


def test_default_profile_shape():
    inst = generate_instance(7)
    assert (inst.n_biosensors, inst.n_sinks, inst.n_relays) == (16, 2, 400)
    prof = GeneratorProfile()
    for r in inst.relays:
        x, y = r.position
        assert 0 <= x <= prof.body_width and 0 <= y <= prof.body_height
        assert not any(x0 <= x <= x1 and y0 <= y <= y1 for x0, y0, x1, y1 in prof.exclusions)


def test_small_override_arc_count():
    prof = GeneratorProfile.from_dict({"preset": "small", "n_biosensors": 3, "n_relays": 6, "n_scenarios": 2})
    inst = generate_instance(1, prof)
    assert len(inst.commodities) == 3
    bio = inst.biosensor_positions
    rel = [r.position for r in inst.relays]
    expected = _expected_arcs(bio, rel, inst.sink_positions, prof.biosensor_range, prof.relay_range)
    assert len(inst.arcs) == len(expected)
    # 6*5 relay pairs plus 3*7 biosensor links, plus at most one relay->sink arc per relay
    assert sum(a.klass is not ArcClass.R_TO_S for a in inst.arcs) <= 6 * 5 + 3 * 7
    assert len(inst.arcs) <= 6 * 5 + 3 * 7 + 6


def test_generation_gives_up_when_disconnected():
    prof = GeneratorProfile.from_dict({"preset": "small", "biosensor_range": 0.01, "relay_range": 0.01,
                                       "max_retries": 3})
    with pytest.raises(GenerationError):
        generate_instance(0, prof)


def test_scenario_rates_stay_in_deviation_band():
    prof = GeneratorProfile.preset("mid")
    inst = generate_instance(3, prof)
    d = inst.demand
    assert np.all(d > 0)
    lo, hi = prof.bitrate_low * (1 - prof.deviation), prof.bitrate_high * (1 + prof.deviation)
    assert d.min() >= lo and d.max() <= hi
    # one capacity for all relays, tied to the largest nominal rate
    caps = inst.capacities
    assert np.all(caps == caps[0])
    assert prof.capacity_factor * d.max() / (1 + prof.deviation) <= caps[0]
    assert caps[0] <= prof.capacity_factor * d.max() / (1 - prof.deviation)


# ---- persistence ------------------------------------------------------------

def test_round_trip_default_instance(tmp_path):
    inst = generate_instance(5)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    again = load_instance(path)
    assert again == inst
    assert [a.energy for a in again.arcs] == [a.energy for a in inst.arcs]


@given(st.integers(0, 1000))
def test_round_trip_is_bit_exact(seed):
    inst = generate_instance(seed, GeneratorProfile.preset("small"))
    data = json.loads(json.dumps(instance_to_dict(inst)))
    from banopt.instance import instance_from_dict
    assert instance_from_dict(data) == inst


def _saved(tmp_path, mutate):
    inst = generate_instance(2, GeneratorProfile.preset("small"))
    data = instance_to_dict(inst)
    mutate(data)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    return path


def test_biosensor_headed_arc_rejected(tmp_path):
    def mutate(d):
        d["arcs"][0]["head"] = "b1"
    with pytest.raises(InstanceInvariantError, match="bad.json"):
        load_instance(_saved(tmp_path, mutate))


def test_no_scenarios_rejected(tmp_path):
    def mutate(d):
        d["scenarios"] = []
    with pytest.raises(InstanceInvariantError):
        load_instance(_saved(tmp_path, mutate))


def test_missing_key_is_schema_error(tmp_path):
    def mutate(d):
        del d["relay_budget"]
    with pytest.raises(InstanceSchemaError, match="relay_budget"):
        load_instance(_saved(tmp_path, mutate))


def test_bad_field_reports_its_path(tmp_path):
    def mutate(d):
        d["arcs"][3]["tail"] = 17
    with pytest.raises(InstanceSchemaError, match=r"arcs\[3\]"):
        load_instance(_saved(tmp_path, mutate))


def test_tampered_energy_rejected(tmp_path):
    def mutate(d):
        d["arcs"][0]["energy"] = float.hex(1.0)
    with pytest.raises(InstanceInvariantError, match="energy"):
        load_instance(_saved(tmp_path, mutate))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_instance(tmp_path / "nope.json")


# ---- structural invariants -----------------------------------------------------

def test_unreachable_commodity_rejected():
    with pytest.raises(InstanceInvariantError, match="no path"):
        toy(1, 1, 1, [("b0", "r0", 0.1)], [[[5.0]]])


def test_duplicate_arc_rejected():
    with pytest.raises(InstanceInvariantError, match="duplicate"):
        toy(1, 0, 1, [("b0", "s0", 0.1), ("b0", "s0", 0.1)], [[[5.0]]])


def test_zero_demand_pair_needs_no_path():
    inst = toy(2, 0, 1, [("b0", "s0", 0.1)], [[[5.0], [0.0]]])
    assert inst.commodities == ((0, 0),)


def test_negative_rate_rejected():
    with pytest.raises(InstanceInvariantError):
        toy(1, 0, 1, [("b0", "s0", 0.1)], [[[-1.0]]])
