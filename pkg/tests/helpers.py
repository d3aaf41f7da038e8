"""Hand-built instances for tests."""

from __future__ import annotations

from banopt.instance import (Arc, BanInstance, EnergyParams, NodeId, NodeKind, Relay, Scenario,
                             energy_coefficient)

KINDS = {"b": NodeKind.BIOSENSOR, "r": NodeKind.RELAY, "s": NodeKind.SINK}
LAMBDA = 3.38
# a steep amplifier term so two short hops beat one long link
LONG_HOPS = EnergyParams(tx_amp=20e-9)


def node(label: str) -> NodeId:
    return NodeId(KINDS[label[0]], int(label[1:]))


def arc(tail: str, head: str, distance: float, params: EnergyParams = EnergyParams(),
        pathloss: float = LAMBDA) -> Arc:
    return Arc(node(tail), node(head), distance, pathloss, energy_coefficient(params, distance, pathloss))


def toy(n_b: int, n_r: int, n_s: int, links, demands, capacity=1e9, budget=None,
        params: EnergyParams = EnergyParams()) -> BanInstance:
    """``links``: (tail, head, distance) triples; ``demands``: one |B|x|S| matrix per scenario."""
    caps = capacity if isinstance(capacity, (list, tuple)) else [capacity] * n_r
    return BanInstance(
        biosensor_positions=tuple((0.0, float(i)) for i in range(n_b)),
        sink_positions=tuple((1.0, float(i)) for i in range(n_s)),
        relays=tuple(Relay(i, (0.5, float(i)), float(caps[i])) for i in range(n_r)),
        arcs=tuple(arc(t, h, d, params) for t, h, d in links),
        scenarios=tuple(Scenario(k, tuple(tuple(float(v) for v in row) for row in m))
                        for k, m in enumerate(demands)),
        relay_budget=n_r if budget is None else budget,
        energy_params=params,
    )


def path_arcs(instance: BanInstance, *labels: str) -> list[int]:
    """Arc indices along a vertex sequence such as ("b0", "r1", "s0")."""
    index = {(a.tail, a.head): i for i, a in enumerate(instance.arcs)}
    return [index[(node(u), node(v))] for u, v in zip(labels, labels[1:])]


def feasible_designs(instance: BanInstance):
    """Every feasible design as ``(worst_energy, paths, relays)``.

    Relay sets range over all subsets within the budget, so designs that
    deploy idle relays are included. Paths are simple and stay inside the set.
    """
    import itertools

    comms = instance.commodities
    out: dict = {}
    for i, a in enumerate(instance.arcs):
        out.setdefault(a.tail, []).append(i)
    for size in range(min(instance.relay_budget, instance.n_relays) + 1):
        for subset in itertools.combinations(range(instance.n_relays), size):
            allowed = set(subset)
            options = []
            for b, s in comms:
                found = []
                target = NodeId(NodeKind.SINK, s)

                def walk(v, seen, arcs):
                    for i in out.get(v, []):
                        h = instance.arcs[i].head
                        if h == target:
                            found.append(tuple(arcs + [i]))
                        elif h.kind is NodeKind.RELAY and h.index in allowed and h not in seen:
                            walk(h, seen | {h}, arcs + [i])

                walk(NodeId(NodeKind.BIOSENSOR, b), frozenset(), [])
                options.append(found)
            for combo in itertools.product(*options):
                worst = 0.0
                ok = True
                for sc in instance.scenarios:
                    load = [0.0] * instance.n_relays
                    energy = 0.0
                    for (b, s), path in zip(comms, combo):
                        rate = sc.demand[b][s]
                        for i in path:
                            energy += instance.arcs[i].energy * rate
                            h = instance.arcs[i].head
                            if h.kind is NodeKind.RELAY:
                                load[h.index] += rate
                    if any(load[r] > instance.relays[r].capacity for r in subset):
                        ok = False
                        break
                    worst = max(worst, energy)
                if ok:
                    yield worst, combo, frozenset(subset)


def brute_force_optimum(instance: BanInstance, accept=None):
    """Naive min-max optimum over :func:`feasible_designs`.

    ``accept(paths, relays)`` may veto candidates (e.g. to honour a fixing).
    Returns ``(value, paths, relays)`` or ``None`` when nothing is feasible.
    Written independently of the package search so it can referee it.
    """
    best = None
    for worst, combo, relays in feasible_designs(instance):
        if accept is not None and not accept(combo, relays):
            continue
        if best is None or worst < best[0]:
            best = (worst, combo, relays)
    return best


def design_vector(model, paths, relays, energy):
    """Model variable vector of a design."""
    import numpy as np

    v = np.zeros(model.n_vars)
    for k, p in enumerate(paths):
        v[[k * model.n_arcs + a for a in p]] = 1.0
    for r in relays:
        v[model.n_flow + r] = 1.0
    if model.robust:
        v[-1] = energy
    return v


def three_commodity_fixture():
    """Each biosensor has a direct arc and a detour through the single relay."""
    links = [("b0", "s0", 2.0), ("b1", "s0", 2.0), ("b2", "s0", 2.0),
             ("b0", "r0", 1.0), ("b1", "r0", 1.0), ("b2", "r0", 1.0), ("r0", "s0", 1.0)]
    demands = [[[4.0], [5.0], [3.0]], [[6.0], [2.0], [4.0]]]
    return toy(3, 1, 1, links, demands, capacity=10.0, budget=1, params=LONG_HOPS)


def two_relay_fixture(capacity=6.0):
    """Detours beat direct arcs, but the budget admits only one of the two relays."""
    links = [("b0", "s0", 2.0), ("b1", "s0", 2.0), ("b0", "r0", 1.0), ("r0", "s0", 1.0),
             ("b1", "r1", 1.0), ("r1", "s0", 1.0)]
    return toy(2, 2, 1, links, [[[4.0], [5.0]], [[6.0], [3.0]]], capacity=capacity, budget=1,
               params=LONG_HOPS)
