"""BAN problem data: devices, wireless links, bitrate scenarios.

Devices are numbered globally as biosensors first, then relays, then sinks.
Instances are immutable once built; :func:`generate_instance` produces the
synthetic body-area family and :func:`save_instance` / :func:`load_instance`
persist them as JSON with hex-encoded floats.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

Point = tuple[float, float]
Rect = tuple[float, float, float, float]  # x0, y0, x1, y1


class InstanceError(Exception):
    """Base class for instance problems."""


class InstanceSchemaError(InstanceError):
    """The instance file does not follow the expected layout."""


class InstanceInvariantError(InstanceError):
    """The data is well-formed but violates a structural rule."""


class GenerationError(InstanceError):
    """No connected instance could be drawn within the retry budget."""


class NodeKind(str, Enum):
    BIOSENSOR = "biosensor"
    RELAY = "relay"
    SINK = "sink"


_PREFIX = {NodeKind.BIOSENSOR: "b", NodeKind.RELAY: "r", NodeKind.SINK: "s"}


@dataclass(frozen=True, order=True)
class NodeId:
    kind: NodeKind
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise InstanceInvariantError(f"negative node index {self.index}")

    @property
    def label(self) -> str:
        return f"{_PREFIX[self.kind]}{self.index}"

    def __str__(self):
        return self.label


class ArcClass(str, Enum):
    B_TO_S = "B->S"
    B_TO_R = "B->R"
    R_TO_R = "R<->R"
    R_TO_S = "R->S"


_ARC_CLASS = {
    (NodeKind.BIOSENSOR, NodeKind.SINK): ArcClass.B_TO_S,
    (NodeKind.BIOSENSOR, NodeKind.RELAY): ArcClass.B_TO_R,
    (NodeKind.RELAY, NodeKind.RELAY): ArcClass.R_TO_R,
    (NodeKind.RELAY, NodeKind.SINK): ArcClass.R_TO_S,
}


def arc_class(tail: NodeId, head: NodeId) -> ArcClass:
    try:
        return _ARC_CLASS[(tail.kind, head.kind)]
    except KeyError:
        raise InstanceInvariantError(
            f"no arc class for {tail.label}->{head.label}: biosensors only "
            "transmit and sinks only receive") from None


@dataclass(frozen=True)
class EnergyParams:
    """Radio energy model, joules per bit.

    ``tx_amp`` is either one coefficient for every path-loss exponent or a
    mapping from exponent to coefficient.
    """

    tx_circ: float = 16.7e-9
    rx_circ: float = 36.1e-9
    tx_amp: float | Mapping[float, float] = 1.97e-9

    def __post_init__(self):
        amps = self.tx_amp.values() if isinstance(self.tx_amp, Mapping) else [self.tx_amp]
        if min([self.tx_circ, self.rx_circ, *amps]) < 0:
            raise InstanceInvariantError("energy parameters must be non-negative")

    def amp(self, pathloss: float) -> float:
        if isinstance(self.tx_amp, Mapping):
            try:
                return self.tx_amp[pathloss]
            except KeyError:
                raise InstanceInvariantError(
                    f"no amplifier coefficient for path-loss exponent {pathloss}") from None
        return self.tx_amp


def energy_coefficient(params: EnergyParams, distance: float, pathloss: float) -> float:
    """Energy to move one data unit across a link (transmit plus receive)."""
    if distance < 0:
        raise ValueError(f"distance must be non-negative, got {distance}")
    if pathloss <= 0:
        raise ValueError(f"path-loss exponent must be positive, got {pathloss}")
    return params.tx_circ + params.amp(pathloss) * distance ** pathloss + params.rx_circ


@dataclass(frozen=True)
class Arc:
    tail: NodeId
    head: NodeId
    distance: float
    pathloss: float
    energy: float

    @property
    def klass(self) -> ArcClass:
        return arc_class(self.tail, self.head)


@dataclass(frozen=True)
class Scenario:
    """Bitrates of one data-generation scenario, ``demand[b][s]`` in bit/s."""

    id: int
    demand: tuple[tuple[float, ...], ...]

    def rate(self, b: int, s: int) -> float:
        return self.demand[b][s]


@dataclass(frozen=True)
class Relay:
    index: int
    position: Point
    capacity: float


@dataclass(frozen=True, eq=True)
class BanInstance:
    biosensor_positions: tuple[Point, ...]
    sink_positions: tuple[Point, ...]
    relays: tuple[Relay, ...]
    arcs: tuple[Arc, ...]
    scenarios: tuple[Scenario, ...]
    relay_budget: int
    energy_params: EnergyParams
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self._validate()

    # ---- sizes -------------------------------------------------------
    @property
    def n_biosensors(self) -> int:
        return len(self.biosensor_positions)

    @property
    def n_sinks(self) -> int:
        return len(self.sink_positions)

    @property
    def n_relays(self) -> int:
        return len(self.relays)

    @property
    def n_nodes(self) -> int:
        return self.n_biosensors + self.n_relays + self.n_sinks

    def node_index(self, node: NodeId) -> int:
        """Global vertex number: biosensors, then relays, then sinks."""
        if node.kind is NodeKind.BIOSENSOR:
            return node.index
        if node.kind is NodeKind.RELAY:
            return self.n_biosensors + node.index
        return self.n_biosensors + self.n_relays + node.index

    def node_at(self, v: int) -> NodeId:
        nb, nr = self.n_biosensors, self.n_relays
        if v < nb:
            return NodeId(NodeKind.BIOSENSOR, v)
        if v < nb + nr:
            return NodeId(NodeKind.RELAY, v - nb)
        return NodeId(NodeKind.SINK, v - nb - nr)

    def relay_of(self, v: int) -> int | None:
        r = v - self.n_biosensors
        return r if 0 <= r < self.n_relays else None

    # ---- derived arrays ----------------------------------------------
    @cached_property
    def demand(self) -> np.ndarray:
        """Bitrates as an array of shape (|scenarios|, |B|, |S|)."""
        return np.array([sc.demand for sc in self.scenarios], dtype=float).reshape(
            len(self.scenarios), self.n_biosensors, self.n_sinks)

    @cached_property
    def commodities(self) -> tuple[tuple[int, int], ...]:
        """Pairs (b, s) with positive bitrate in at least one scenario."""
        d = self.demand
        return tuple((b, s) for b in range(self.n_biosensors) for s in range(self.n_sinks)
                     if (d[:, b, s] > 0).any())

    @cached_property
    def commodity_demand(self) -> np.ndarray:
        """Array (|scenarios|, |C|) of commodity bitrates."""
        d = self.demand
        return np.array([[d[k, b, s] for b, s in self.commodities]
                         for k in range(len(self.scenarios))], dtype=float).reshape(
            len(self.scenarios), len(self.commodities))

    @cached_property
    def arc_tail(self) -> np.ndarray:
        return np.array([self.node_index(a.tail) for a in self.arcs], dtype=np.int64)

    @cached_property
    def arc_head(self) -> np.ndarray:
        return np.array([self.node_index(a.head) for a in self.arcs], dtype=np.int64)

    @cached_property
    def arc_energy(self) -> np.ndarray:
        return np.array([a.energy for a in self.arcs], dtype=float)

    @cached_property
    def capacities(self) -> np.ndarray:
        return np.array([r.capacity for r in self.relays], dtype=float)

    @cached_property
    def out_arcs(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for a, t in enumerate(self.arc_tail):
            out[t].append(a)
        return tuple(tuple(o) for o in out)

    @cached_property
    def in_arcs(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for a, h in enumerate(self.arc_head):
            inc[h].append(a)
        return tuple(tuple(i) for i in inc)

    def arcs_of_class(self, klass: ArcClass) -> list[int]:
        return [a for a, arc in enumerate(self.arcs) if arc.klass is klass]

    def usable_arcs(self, b: int, s: int) -> np.ndarray:
        """Mask of arcs that can lie on some b->s path.

        Arcs leaving another biosensor or entering another sink can never
        carry the (b, s) flow.
        """
        nb, nr = self.n_biosensors, self.n_relays
        tail, head = self.arc_tail, self.arc_head
        ok_tail = (tail == b) | ((tail >= nb) & (tail < nb + nr))
        ok_head = (head == nb + nr + s) | ((head >= nb) & (head < nb + nr))
        return ok_tail & ok_head

    # ---- validation ---------------------------------------------------
    def _validate(self):
        if not self.scenarios:
            raise InstanceInvariantError("instance needs at least one scenario")
        # zero is allowed here so relay-free designs can be expressed; generated
        # instances always carry a positive budget
        if self.relay_budget < 0 or int(self.relay_budget) != self.relay_budget:
            raise InstanceInvariantError(f"relay budget must be a non-negative integer, got {self.relay_budget}")
        nb, ns = self.n_biosensors, self.n_sinks
        for i, relay in enumerate(self.relays):
            if relay.index != i:
                raise InstanceInvariantError(f"relay {i} carries index {relay.index}")
            if relay.capacity < 0:
                raise InstanceInvariantError(f"relay r{i} has negative capacity")
        for sc in self.scenarios:
            if len(sc.demand) != nb or any(len(row) != ns for row in sc.demand):
                raise InstanceInvariantError(
                    f"scenario {sc.id} demand must be a {nb}x{ns} matrix")
            if any(v < 0 or not math.isfinite(v) for row in sc.demand for v in row):
                raise InstanceInvariantError(f"scenario {sc.id} has a negative or non-finite rate")
        limits = {NodeKind.BIOSENSOR: nb, NodeKind.RELAY: self.n_relays, NodeKind.SINK: ns}
        seen = set()
        for arc in self.arcs:
            for node in (arc.tail, arc.head):
                if node.index >= limits[node.kind]:
                    raise InstanceInvariantError(f"arc endpoint {node.label} out of range")
            arc_class(arc.tail, arc.head)
            if arc.tail == arc.head:
                raise InstanceInvariantError(f"self-loop at {arc.tail.label}")
            key = (arc.tail, arc.head)
            if key in seen:
                raise InstanceInvariantError(f"duplicate arc {arc.tail.label}->{arc.head.label}")
            seen.add(key)
            if arc.distance < 0 or arc.pathloss <= 0:
                raise InstanceInvariantError(
                    f"arc {arc.tail.label}->{arc.head.label} has invalid distance/path loss")
            expected = energy_coefficient(self.energy_params, arc.distance, arc.pathloss)
            if not math.isclose(arc.energy, expected, rel_tol=1e-12, abs_tol=0.0):
                raise InstanceInvariantError(
                    f"arc {arc.tail.label}->{arc.head.label} energy {arc.energy!r} "
                    f"disagrees with the energy model ({expected!r})")
        for b, s in self.commodities:
            if not self._reachable(b, s):
                raise InstanceInvariantError(f"no path from b{b} to s{s}")

    def _reachable(self, b: int, s: int) -> bool:
        target = self.node_index(NodeId(NodeKind.SINK, s))
        stack, seen = [b], {b}
        while stack:
            v = stack.pop()
            if v == target:
                return True
            for a in self.out_arcs[v]:
                h = int(self.arc_head[a])
                if h not in seen and (h == target or self.relay_of(h) is not None):
                    seen.add(h)
                    stack.append(h)
        return False


# ---------------------------------------------------------------------------
# geometry and generation


def build_arcs(biosensor_positions: Sequence[Point], relay_positions: Sequence[Point],
               sink_positions: Sequence[Point], biosensor_range: float, relay_range: float,
               params: EnergyParams, pathloss: float) -> list[Arc]:
    """All links allowed by the four arc classes and the tail's range.

    Arcs come out sorted by (tail, head) in global vertex order.
    """
    def node_list(kind, positions):
        return [(NodeId(kind, i), p) for i, p in enumerate(positions)]

    biosensors = node_list(NodeKind.BIOSENSOR, biosensor_positions)
    relays = node_list(NodeKind.RELAY, relay_positions)
    sinks = node_list(NodeKind.SINK, sink_positions)

    arcs = []
    for tails, rng, heads in ((biosensors, biosensor_range, relays + sinks),
                              (relays, relay_range, relays + sinks)):
        for tail, p in tails:
            for head, q in heads:
                if head == tail:
                    continue
                dist = math.dist(p, q)
                if dist <= rng:
                    arcs.append(Arc(tail, head, dist, pathloss,
                                    energy_coefficient(params, dist, pathloss)))
    return arcs


# 1.8 m x 0.5 m body seen from the front, y = 0 at the soles.
BODY_WIDTH = 0.5
BODY_HEIGHT = 1.8
BODY_EXCLUSIONS: tuple[Rect, ...] = (
    (0.12, 1.55, 0.38, 1.80),   # head
    (0.00, 0.72, 0.07, 0.88),   # left hand
    (0.43, 0.72, 0.50, 0.88),   # right hand
    (0.08, 0.00, 0.42, 0.08),   # feet
)
# Sensors sit on the limbs and head, sinks on the trunk, so that with the
# default 0.45 m range only a few sensors reach a sink directly.
BIOSENSOR_LAYOUT: tuple[Point, ...] = (
    (0.10, 0.12), (0.40, 0.12), (0.10, 0.25), (0.40, 0.25),
    (0.10, 0.38), (0.40, 0.38), (0.03, 0.52), (0.47, 0.52),
    (0.05, 0.62), (0.45, 1.62), (0.05, 1.64), (0.25, 1.66),
    (0.15, 1.76), (0.35, 1.76), (0.03, 1.75), (0.47, 1.75),
)
SINK_LAYOUT: tuple[Point, ...] = ((0.25, 0.95), (0.25, 1.15))


@dataclass
class GeneratorProfile:
    """Knobs of the synthetic instance family."""

    n_biosensors: int = 16
    n_sinks: int = 2
    n_relays: int = 400
    n_scenarios: int = 5
    body_width: float = BODY_WIDTH
    body_height: float = BODY_HEIGHT
    exclusions: list[Rect] = field(default_factory=lambda: [list(r) for r in BODY_EXCLUSIONS])
    biosensor_layout: list[Point] = field(default_factory=lambda: [list(p) for p in BIOSENSOR_LAYOUT])
    sink_layout: list[Point] = field(default_factory=lambda: [list(p) for p in SINK_LAYOUT])
    biosensor_range: float = 0.45
    relay_range: float = 0.45
    pathloss: float = 3.38
    bitrate_low: float = 1000.0
    bitrate_high: float = 10000.0
    deviation: float = 0.5
    capacity_factor: float = 10.0
    relay_budget: int = 30
    tx_circ: float = 16.7e-9
    rx_circ: float = 36.1e-9
    tx_amp: float = 1.97e-9
    max_retries: int = 200

    @classmethod
    def preset(cls, name: str) -> "GeneratorProfile":
        if name == "default":
            return cls()
        if name == "mid":
            return cls(n_relays=40, n_scenarios=5, relay_budget=10)
        if name == "small":
            # trunk patch, sink in the middle, one sensor per corner
            return cls(n_biosensors=4, n_sinks=1, n_relays=10, n_scenarios=3,
                       body_width=0.5, body_height=0.8, exclusions=[],
                       biosensor_layout=[[0.03, 0.03], [0.47, 0.03], [0.03, 0.77], [0.47, 0.77]],
                       sink_layout=[[0.25, 0.40]],
                       biosensor_range=0.35, relay_range=0.35,
                       capacity_factor=3.0, relay_budget=3)
        raise ValueError(f"unknown profile preset {name!r}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GeneratorProfile":
        base = data.get("preset")
        prof = cls.preset(base) if base else cls()
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known - {"preset"}
        if unknown:
            raise InstanceSchemaError(f"unknown profile keys: {sorted(unknown)}")
        return dataclasses.replace(prof, **{k: v for k, v in data.items() if k != "preset"})

    @classmethod
    def from_file(cls, path: str | Path) -> "GeneratorProfile":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def energy_params(self) -> EnergyParams:
        return EnergyParams(self.tx_circ, self.rx_circ, self.tx_amp)

    def to_dict(self) -> dict[str, Any]:
        return json.loads(json.dumps(dataclasses.asdict(self)))


def _inside_exclusion(p: Point, exclusions) -> bool:
    return any(x0 <= p[0] <= x1 and y0 <= p[1] <= y1 for x0, y0, x1, y1 in exclusions)


def _sample_relays(rng: np.random.Generator, prof: GeneratorProfile) -> list[Point]:
    out: list[Point] = []
    while len(out) < prof.n_relays:
        batch = rng.random((2 * (prof.n_relays - len(out)) + 8, 2))
        for u, v in batch:
            p = (float(u * prof.body_width), float(v * prof.body_height))
            if not _inside_exclusion(p, prof.exclusions):
                out.append(p)
                if len(out) == prof.n_relays:
                    break
    return out


def generate_instance(seed: int, profile: GeneratorProfile | None = None) -> BanInstance:
    """Draw one instance of the family; a pure function of (seed, profile)."""
    prof = profile or GeneratorProfile()
    if prof.n_biosensors > len(prof.biosensor_layout) or prof.n_sinks > len(prof.sink_layout):
        raise GenerationError("profile layout has fewer positions than requested devices")
    rng = np.random.default_rng(seed)
    biosensors = [tuple(map(float, p)) for p in prof.biosensor_layout[:prof.n_biosensors]]
    sinks = [tuple(map(float, p)) for p in prof.sink_layout[:prof.n_sinks]]
    params = prof.energy_params()

    nominal = rng.uniform(prof.bitrate_low, prof.bitrate_high, size=prof.n_biosensors)
    factors = rng.uniform(1 - prof.deviation, 1 + prof.deviation,
                          size=(prof.n_scenarios, prof.n_biosensors, prof.n_sinks))
    scenarios = tuple(
        Scenario(k, tuple(tuple(float(nominal[b] * factors[k, b, s]) for s in range(prof.n_sinks))
                          for b in range(prof.n_biosensors)))
        for k in range(prof.n_scenarios))
    capacity = float(prof.capacity_factor * nominal.max()) if prof.n_biosensors else 0.0
    meta = {"seed": int(seed), "profile": prof.to_dict()}

    last_error = None
    for _ in range(max(1, prof.max_retries)):
        relay_pos = _sample_relays(rng, prof)
        arcs = build_arcs(biosensors, relay_pos, sinks, prof.biosensor_range,
                          prof.relay_range, params, prof.pathloss)
        try:
            return BanInstance(
                biosensor_positions=tuple(biosensors), sink_positions=tuple(sinks),
                relays=tuple(Relay(i, p, capacity) for i, p in enumerate(relay_pos)),
                arcs=tuple(arcs), scenarios=scenarios, relay_budget=int(prof.relay_budget),
                energy_params=params, meta=meta)
        except InstanceInvariantError as exc:
            last_error = exc
    raise GenerationError(
        f"seed {seed}: no connected relay layout after {prof.max_retries} draws ({last_error})")


# ---------------------------------------------------------------------------
# JSON persistence

def _hx(v: float) -> str:
    return float(v).hex()


def _fx(s: Any, where: str) -> float:
    if not isinstance(s, str):
        raise InstanceSchemaError(f"{where}: expected hex-float string, got {type(s).__name__}")
    try:
        return float.fromhex(s)
    except ValueError:
        raise InstanceSchemaError(f"{where}: bad hex float {s!r}") from None


def instance_to_dict(inst: BanInstance) -> dict[str, Any]:
    p = inst.energy_params
    amp = ({_hx(k): _hx(v) for k, v in sorted(p.tx_amp.items())}
           if isinstance(p.tx_amp, Mapping) else _hx(p.tx_amp))
    nodes = (
        [{"kind": "biosensor", "index": i, "position": [_hx(x), _hx(y)]}
         for i, (x, y) in enumerate(inst.biosensor_positions)]
        + [{"kind": "relay", "index": r.index, "position": [_hx(r.position[0]), _hx(r.position[1])]}
           for r in inst.relays]
        + [{"kind": "sink", "index": i, "position": [_hx(x), _hx(y)]}
           for i, (x, y) in enumerate(inst.sink_positions)])
    return {
        "meta": dict(inst.meta),
        "nodes": nodes,
        "energy_params": {"tx_circ": _hx(p.tx_circ), "rx_circ": _hx(p.rx_circ), "tx_amp": amp},
        "arcs": [{"tail": a.tail.label, "head": a.head.label, "distance": _hx(a.distance),
                  "pathloss": _hx(a.pathloss), "energy": _hx(a.energy)} for a in inst.arcs],
        "scenarios": [{"id": sc.id, "demand": [[_hx(v) for v in row] for row in sc.demand]}
                      for sc in inst.scenarios],
        "relay_budget": inst.relay_budget,
        "capacities": [_hx(r.capacity) for r in inst.relays],
    }


def _parse_label(label: Any, where: str) -> NodeId:
    kinds = {"b": NodeKind.BIOSENSOR, "r": NodeKind.RELAY, "s": NodeKind.SINK}
    if not isinstance(label, str) or len(label) < 2 or label[0] not in kinds or not label[1:].isdigit():
        raise InstanceSchemaError(f"{where}: bad node label {label!r}")
    return NodeId(kinds[label[0]], int(label[1:]))


def instance_from_dict(data: Mapping[str, Any]) -> BanInstance:
    def need(obj, key, where):
        if not isinstance(obj, Mapping) or key not in obj:
            raise InstanceSchemaError(f"{where}: missing key {key!r}")
        return obj[key]

    for key in ("meta", "nodes", "energy_params", "arcs", "scenarios", "relay_budget", "capacities"):
        need(data, key, "$")

    positions: dict[str, dict[int, Point]] = {"biosensor": {}, "relay": {}, "sink": {}}
    for i, node in enumerate(need(data, "nodes", "$")):
        where = f"$.nodes[{i}]"
        kind = need(node, "kind", where)
        if kind not in positions:
            raise InstanceSchemaError(f"{where}.kind: unknown kind {kind!r}")
        pos = need(node, "position", where)
        if not isinstance(pos, list) or len(pos) != 2:
            raise InstanceSchemaError(f"{where}.position: expected [x, y]")
        idx = need(node, "index", where)
        if not isinstance(idx, int) or idx < 0:
            raise InstanceSchemaError(f"{where}.index: expected non-negative integer")
        positions[kind][idx] = (_fx(pos[0], f"{where}.position[0]"), _fx(pos[1], f"{where}.position[1]"))

    def ordered(kind):
        got = positions[kind]
        if sorted(got) != list(range(len(got))):
            raise InstanceSchemaError(f"$.nodes: {kind} indices are not contiguous from 0")
        return tuple(got[i] for i in range(len(got)))

    ep = need(data, "energy_params", "$")
    amp_raw = need(ep, "tx_amp", "$.energy_params")
    if isinstance(amp_raw, Mapping):
        amp = {_fx(k, "$.energy_params.tx_amp key"): _fx(v, f"$.energy_params.tx_amp[{k}]")
               for k, v in amp_raw.items()}
    else:
        amp = _fx(amp_raw, "$.energy_params.tx_amp")
    params = EnergyParams(_fx(need(ep, "tx_circ", "$.energy_params"), "$.energy_params.tx_circ"),
                          _fx(need(ep, "rx_circ", "$.energy_params"), "$.energy_params.rx_circ"),
                          amp)

    arcs = []
    for i, a in enumerate(need(data, "arcs", "$")):
        where = f"$.arcs[{i}]"
        arcs.append(Arc(_parse_label(need(a, "tail", where), f"{where}.tail"),
                        _parse_label(need(a, "head", where), f"{where}.head"),
                        _fx(need(a, "distance", where), f"{where}.distance"),
                        _fx(need(a, "pathloss", where), f"{where}.pathloss"),
                        _fx(need(a, "energy", where), f"{where}.energy")))

    scenarios = []
    for i, sc in enumerate(need(data, "scenarios", "$")):
        where = f"$.scenarios[{i}]"
        rows = need(sc, "demand", where)
        if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
            raise InstanceSchemaError(f"{where}.demand: expected a matrix")
        scenarios.append(Scenario(need(sc, "id", where), tuple(
            tuple(_fx(v, f"{where}.demand[{b}][{s}]") for s, v in enumerate(row))
            for b, row in enumerate(rows))))

    relay_pos = ordered("relay")
    caps = need(data, "capacities", "$")
    if not isinstance(caps, list) or len(caps) != len(relay_pos):
        raise InstanceSchemaError("$.capacities: expected one entry per relay")
    budget = need(data, "relay_budget", "$")
    if not isinstance(budget, int) or isinstance(budget, bool):
        raise InstanceSchemaError("$.relay_budget: expected integer")
    return BanInstance(
        biosensor_positions=ordered("biosensor"), sink_positions=ordered("sink"),
        relays=tuple(Relay(i, p, _fx(caps[i], f"$.capacities[{i}]")) for i, p in enumerate(relay_pos)),
        arcs=tuple(arcs), scenarios=tuple(scenarios), relay_budget=budget,
        energy_params=params, meta=data["meta"])


def save_instance(inst: BanInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1, sort_keys=True) + "\n")


def load_instance(path: str | Path) -> BanInstance:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"instance file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceSchemaError(f"{path}: not valid JSON ({exc})") from None
    try:
        return instance_from_dict(data)
    except InstanceError as exc:
        raise type(exc)(f"{path}: {exc}") from None
