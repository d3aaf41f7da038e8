import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from banopt.instance import GeneratorProfile, Relay, Scenario, generate_instance
from banopt.mip import enumerate_exact, solve_mip
from banopt.model import build_band_ilp, build_rob_band_ilp, evaluate

from helpers import path_arcs, toy


def two_commodity_toy(capacity=1e9, budget=3):
    """b0, b1 -> s0, each with a direct arc and a detour through r0; r1, r2 idle."""
    links = [("b0", "s0", 0.4), ("b1", "s0", 0.3), ("b0", "r0", 0.1), ("b1", "r0", 0.1),
             ("r0", "s0", 0.1), ("r1", "s0", 0.2), ("r0", "r2", 0.1), ("r2", "s0", 0.1)]
    demands = [[[4.0], [5.0]], [[6.0], [2.0]]]
    return toy(2, 3, 1, links, demands, capacity=capacity, budget=budget)


def lp_oracle(model):
    """Relaxation optimum straight from the model rows, via scipy's HiGHS.

    Rows are normalised and E is measured in units of the largest energy
    coefficient, otherwise HiGHS's absolute tolerances swamp the objective.
    """
    A = model.A.toarray().copy()
    rhs = model.rhs.astype(float).copy()
    e_unit = 1.0
    if model.robust:
        e_unit = np.abs(A[:, :-1]).max(axis=1)[A[:, -1] != 0].max()
        A[:, -1] *= e_unit
    norm = np.abs(A).max(axis=1)
    norm[norm == 0] = 1.0
    A /= norm[:, None]
    rhs /= norm
    ub_rows, eq_rows, ge = model.sense == "L", model.sense == "E", model.sense == "G"
    A_ub = np.vstack([A[ub_rows], -A[ge]])
    b_ub = np.concatenate([rhs[ub_rows], -rhs[ge]])
    bounds = [(0, 0) if model.forbidden[j] else (0, 1) for j in range(model.n_binary)]
    c = model.objective.astype(float).copy()
    if model.robust:
        bounds.append((0, None))
        c[-1] *= e_unit
    res = linprog(c, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  A_eq=A[eq_rows], b_eq=rhs[eq_rows], bounds=bounds, method="highs")
    return res


# ---- shapes -----------------------------------------------------------------

def test_band_row_count():
    inst = two_commodity_toy()
    m = build_band_ilp(inst, 0)
    assert len(m.commodities) == 2 and inst.n_relays == 3
    assert m.A.shape[0] == 2 + 6 + 2 + 3 + 1 == 14
    groups = {g: sl.stop - sl.start for g, sl in m.groups.items()}
    assert groups == {"cons": 10, "cap": 3, "card": 1}


def test_band_row_names():
    m = build_band_ilp(two_commodity_toy(), 1)
    assert "cons_0_0_b0" in m.row_names and "cons_1_0_r2" in m.row_names
    assert "cons_1_0_s0" in m.row_names and "cap_2_1" in m.row_names and "card" in m.row_names


def test_zero_demand_pair_has_no_variables():
    inst = toy(2, 0, 1, [("b0", "s0", 0.1), ("b1", "s0", 0.1)], [[[3.0], [0.0]]])
    m = build_rob_band_ilp(inst)
    assert m.commodities == ((0, 0),)
    assert m.n_vars == len(inst.arcs) + 1


def test_relay_free_model():
    inst = toy(1, 0, 1, [("b0", "s0", 0.2)], [[[3.0]]])
    m = build_band_ilp(inst, 0)
    assert "cap" in m.groups and m.groups["cap"].stop == m.groups["cap"].start
    assert m.groups["card"].stop == m.groups["card"].start
    assert m.A.shape[0] == 2


def test_robust_counts():
    links = [("b0", "r0", 0.1), ("r0", "s0", 0.1), ("r1", "r2", 0.1), ("r3", "s0", 0.1)]
    inst = toy(1, 4, 1, links, [[[1.0]], [[2.0]], [[3.0]]])
    m = build_rob_band_ilp(inst)
    assert m.n_vars == len(m.commodities) * len(inst.arcs) + 4 + 1
    assert m.groups["cap"].stop - m.groups["cap"].start == 12
    assert m.groups["senergy"].stop - m.groups["senergy"].start == 3


def test_lp_dump_mentions_every_row(tmp_path):
    m = build_rob_band_ilp(two_commodity_toy())
    path = tmp_path / "m.lp"
    m.write_lp(path)
    text = path.read_text()
    for name in m.row_names:
        assert f" {name}:" in text
    assert "Binaries" in text and "E >= 0" in text


# ---- evaluate ---------------------------------------------------------------

def direct_routing(inst):
    x = np.zeros((2, len(inst.arcs)))
    x[0, path_arcs(inst, "b0", "s0")] = 1
    x[1, path_arcs(inst, "b1", "s0")] = 1
    return x


def test_direct_routing_energy_by_hand():
    inst = two_commodity_toy()
    sol = evaluate(inst, direct_routing(inst), np.zeros(3))
    e = {a.tail.label: a.energy for a in inst.arcs if a.head.label == "s0" and a.tail.label[0] == "b"}
    by_hand = max(e["b0"] * 4 + e["b1"] * 5, e["b0"] * 6 + e["b1"] * 2)
    assert sol.feasible and sol.violations == []
    assert sol.energy_value == pytest.approx(by_hand, rel=1e-12)


def test_shared_relay_over_capacity_reports_exact_rows():
    # summed rates: 9 in scenario 0, 8 in scenario 1; capacity 8.5 fails only scenario 0
    inst = two_commodity_toy(capacity=8.5)
    x = np.zeros((2, len(inst.arcs)))
    x[0, path_arcs(inst, "b0", "r0", "s0")] = 1
    x[1, path_arcs(inst, "b1", "r0", "s0")] = 1
    sol = evaluate(inst, x, np.array([1.0, 0, 0]))
    assert not sol.feasible
    assert sol.violations == ["cap_0_0"]


def test_every_violation_is_listed():
    inst = two_commodity_toy(capacity=1.0, budget=1)
    x = np.zeros((2, len(inst.arcs)))
    x[0, path_arcs(inst, "b0", "r0", "s0")] = 1
    x[1, path_arcs(inst, "b1", "r0", "r2", "s0")] = 1
    sol = evaluate(inst, x, np.array([1.0, 0, 0]))
    assert set(sol.violations) == {"cap_0_0", "cap_0_1", "cap_2_0", "cap_2_1", "use_2"}


def test_zero_budget_with_relay_deployed():
    inst = two_commodity_toy(budget=0)
    sol = evaluate(inst, direct_routing(inst), np.array([0, 1.0, 0]))
    assert sol.violations == ["card"]


def test_broken_path_flags_conservation():
    inst = two_commodity_toy()
    x = direct_routing(inst)
    x[1] = 0
    x[1, path_arcs(inst, "b1", "r0")] = 1
    sol = evaluate(inst, x, np.array([1.0, 0, 0]))
    assert set(sol.violations) == {"cons_1_0_r0", "cons_1_0_s0"}


@pytest.mark.parametrize("bad", [None, np.zeros((2, 3)), np.full((2, 8), 0.5)])
def test_incomplete_or_fractional_assignment_rejected(bad):
    inst = two_commodity_toy()
    with pytest.raises(ValueError):
        evaluate(inst, bad, np.zeros(3))


# ---- properties -------------------------------------------------------------

SMALL = GeneratorProfile.preset("small")


SEEDS = st.integers(0, 10_000)


@given(SEEDS, st.integers(0, 2**31))
def test_recomputed_energy_matches(seed, pick):
    inst = generate_instance(seed, SMALL)
    sol = enumerate_exact(inst)
    if sol is None:
        return
    rng = np.random.default_rng(pick)
    x = sol.x.copy()
    total = []
    for k in range(len(inst.scenarios)):
        e = 0.0
        for c, (b, s) in enumerate(inst.commodities):
            for a in np.flatnonzero(x[c]):
                e += inst.arcs[a].energy * inst.scenarios[k].demand[b][s]
        total.append(e)
    assert sol.energy_value == pytest.approx(max(total), rel=1e-9)
    # extra idle relays change feasibility at most, never the energy
    y = np.maximum(rng.integers(0, 2, inst.n_relays).astype(float), sol.y)
    again = evaluate(inst, x, y)
    assert again.energy_value == pytest.approx(max(total), rel=1e-9)


@pytest.mark.parametrize("seed", range(8))
def test_relaxation_bounds_the_optimum(seed):
    inst = generate_instance(seed, SMALL)
    m = build_rob_band_ilp(inst)
    res = lp_oracle(m)
    opt = enumerate_exact(inst)
    if opt is None:
        return
    assert res.status == 0
    assert res.fun <= opt.energy_value * (1 + 1e-9)


def scaled(inst, k):
    scen = tuple(Scenario(s.id, tuple(tuple(v * k for v in row) for row in s.demand)) for s in inst.scenarios)
    relays = tuple(Relay(r.index, r.position, r.capacity * k) for r in inst.relays)
    return dataclasses.replace(inst, scenarios=scen, relays=relays)


@given(SEEDS, st.floats(0.1, 20.0))
def test_homogeneity(seed, k):
    inst = generate_instance(seed, SMALL)
    base, big = enumerate_exact(inst), enumerate_exact(scaled(inst, k))
    if base is None:
        assert big is None
        return
    assert big.energy_value == pytest.approx(k * base.energy_value, rel=1e-9)


def single_scenario(inst, k):
    return dataclasses.replace(inst, scenarios=(Scenario(0, inst.scenarios[k].demand),))


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_single_scenario_robust_equals_nominal(seed):
    inst = generate_instance(seed, SMALL)
    one = single_scenario(inst, 1)
    robust = solve_mip(build_rob_band_ilp(one))
    nominal = solve_mip(build_band_ilp(inst, 1))
    assert robust.status == nominal.status
    if robust.incumbent is not None:
        assert robust.objective == pytest.approx(nominal.objective, rel=1e-9)


@pytest.mark.parametrize("seed", [0, 5])
def test_duplicate_scenario_keeps_optimum(seed):
    inst = generate_instance(seed, SMALL)
    one = single_scenario(inst, 0)
    twice = dataclasses.replace(one, scenarios=(one.scenarios[0], Scenario(1, one.scenarios[0].demand)))
    a, b = solve_mip(build_rob_band_ilp(one)), solve_mip(build_rob_band_ilp(twice))
    assert a.objective == pytest.approx(b.objective, rel=1e-9)
