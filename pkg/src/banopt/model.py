"""Constraint systems for the nominal and the min-max robust design models.

Variables are laid out as one block of flow variables per commodity
(``k * |A| + a``), then one deployment variable per relay, then, for the
robust model, the worst-case energy ``E`` as the last column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .instance import BanInstance, NodeId, NodeKind, Scenario

CAPACITY_TOL = 1e-6
BALANCE_TOL = 1e-9


class VarKind(str, Enum):
    FLOW = "flow"
    RELAY = "relay"
    ENERGY = "energy_bound"


@dataclass(frozen=True)
class VariableId:
    kind: VarKind
    commodity: tuple[int, int] | None = None
    arc: int | None = None
    relay: int | None = None


@dataclass
class Solution:
    x: np.ndarray            # (|C|, |A|) 0/1
    y: np.ndarray            # (|R|,) 0/1
    energy_value: float      # worst-scenario energy, J/s
    feasible: bool
    violations: list[str] = field(default_factory=list)
    scenario_energy: np.ndarray | None = None

    def vector(self, model: "RobustModel") -> np.ndarray:
        return model.join(self.x, self.y, self.energy_value)


@dataclass(frozen=True)
class RobustModel:
    """Rows ``A v (sense) rhs`` over the variable vector ``v``.

    ``groups`` maps each constraint family to its row slice. Rows are kept in
    natural units; :meth:`to_lp` rescales them for the simplex.
    """

    instance: BanInstance
    scenario_ids: tuple[int, ...]
    robust: bool
    commodities: tuple[tuple[int, int], ...]
    A: sp.csr_matrix
    sense: np.ndarray          # 'L', 'E', 'G'
    rhs: np.ndarray
    objective: np.ndarray
    row_names: tuple[str, ...]
    groups: dict[str, slice]
    forbidden: np.ndarray      # flow columns that can never carry flow

    @property
    def n_arcs(self) -> int:
        return len(self.instance.arcs)

    @property
    def n_flow(self) -> int:
        return len(self.commodities) * self.n_arcs

    @property
    def n_vars(self) -> int:
        return self.n_flow + self.instance.n_relays + (1 if self.robust else 0)

    @property
    def relay_offset(self) -> int:
        return self.n_flow

    @property
    def energy_index(self) -> int | None:
        return self.n_vars - 1 if self.robust else None

    @property
    def n_binary(self) -> int:
        return self.n_flow + self.instance.n_relays

    def flow_index(self, k: int, a: int) -> int:
        return k * self.n_arcs + a

    def variable(self, j: int) -> VariableId:
        if j < self.n_flow:
            k, a = divmod(j, self.n_arcs)
            return VariableId(VarKind.FLOW, commodity=self.commodities[k], arc=a)
        if j < self.n_binary:
            return VariableId(VarKind.RELAY, relay=j - self.n_flow)
        return VariableId(VarKind.ENERGY)

    def variable_name(self, j: int) -> str:
        v = self.variable(j)
        if v.kind is VarKind.FLOW:
            arc = self.instance.arcs[v.arc]
            b, s = v.commodity
            return f"x_{b}_{s}_{arc.tail.label}_{arc.head.label}"
        if v.kind is VarKind.RELAY:
            return f"y_{v.relay}"
        return "E"

    def split(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = np.asarray(v, dtype=float)
        x = v[:self.n_flow].reshape(len(self.commodities), self.n_arcs)
        y = v[self.n_flow:self.n_binary]
        return x, y

    def join(self, x: np.ndarray, y: np.ndarray, energy: float | None = None) -> np.ndarray:
        parts = [np.asarray(x, dtype=float).ravel(), np.asarray(y, dtype=float)]
        if self.robust:
            parts.append(np.array([energy if energy is not None else 0.0]))
        return np.concatenate(parts)

    @property
    def scenarios(self) -> list[Scenario]:
        return [self.instance.scenarios[i] for i in self.scenario_ids]

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> Solution:
        return evaluate(self.instance, x, y, self.scenario_ids, self.commodities)

    def objective_value(self, sol: Solution) -> float:
        return sol.energy_value

    def energy_scale(self) -> float:
        """Typical energy magnitude, used to keep LP rows near unit size."""
        inst = self.instance
        d = np.array([[inst.demand[k, b, s] for b, s in self.commodities]
                      for k in self.scenario_ids])
        e_min = inst.arc_energy.min() if len(inst.arcs) else 1.0
        scale = float(d.sum(axis=1).max() * e_min) if d.size else 0.0
        return scale if scale > 0 else 1.0

    def to_lp(self, fixed_lb: np.ndarray | None = None, fixed_ub: np.ndarray | None = None):
        """Continuous relaxation as an :class:`~banopt.lp.LpProblem`.

        Energy rows and the objective are expressed in units of
        :meth:`energy_scale`; capacity rows are divided by the relay capacity.
        """
        from .lp import LpProblem

        n = self.n_vars
        lb = np.zeros(n)
        ub = np.ones(n)
        ub[self.forbidden.nonzero()[0]] = 0.0
        if self.robust:
            ub[-1] = np.inf
        if fixed_lb is not None:
            lb = np.maximum(lb, fixed_lb)
        if fixed_ub is not None:
            ub = np.minimum(ub, fixed_ub)

        scale = self.energy_scale()
        row_scale = np.ones(self.A.shape[0])
        if self.robust:
            row_scale[self.groups["senergy"]] = 1.0 / scale
        cap = self.groups["cap"]
        caps = np.repeat(self.instance.capacities, len(self.scenario_ids))
        if len(caps):
            dmax = max(float(self.instance.demand.max()), 1.0)
            row_scale[cap] = 1.0 / np.where(caps > 0, caps, dmax)
        col_scale = np.ones(n)
        c = self.objective.copy()
        if self.robust:
            # scaled rows read  sum(e x / scale) - E' <= 0  with E' = E / scale
            col_scale[-1] = scale
        else:
            c = c / scale
        A = sp.diags(row_scale) @ self.A @ sp.diags(col_scale)
        integer = np.ones(n, dtype=bool)
        if self.robust:
            integer[-1] = False
        return LpProblem(c=c, A=sp.csr_matrix(A), sense=self.sense.copy(), b=self.rhs * row_scale,
                         lb=lb, ub=ub, integer=integer, obj_scale=scale,
                         row_names=list(self.row_names))

    def write_lp(self, path: str | Path, extra_rows: Sequence[tuple[str, np.ndarray, str, float]] = ()) -> None:
        """Dump the model in CPLEX LP text format."""
        names = [self.variable_name(j) for j in range(self.n_vars)]

        def expr(coefs):
            terms = []
            for j in np.flatnonzero(coefs):
                v = coefs[j]
                terms.append(f"{'-' if v < 0 else '+'} {abs(v):.17g} {names[j]}")
            return " ".join(terms) if terms else "0 " + names[0]

        op = {"L": "<=", "E": "=", "G": ">="}
        lines = ["\\ banopt model", "Minimize", f" obj: {expr(self.objective)}", "Subject To"]
        A = self.A.tocsr()
        for i, name in enumerate(self.row_names):
            lines.append(f" {name}: {expr(A[i].toarray().ravel())} {op[self.sense[i]]} {self.rhs[i]:.17g}")
        for name, coefs, sense, rhs in extra_rows:
            lines.append(f" {name}: {expr(np.asarray(coefs))} {op[sense]} {rhs:.17g}")
        lines.append("Bounds")
        for j in np.flatnonzero(self.forbidden):
            lines.append(f" {names[j]} = 0")
        if self.robust:
            lines.append(" E >= 0")
        lines.append("Binaries")
        lines.extend(f" {names[j]}" for j in range(self.n_binary))
        lines.append("End")
        Path(path).write_text("\n".join(lines) + "\n")


def _build(instance: BanInstance, scenario_ids: Sequence[int], robust: bool) -> RobustModel:
    inst = instance
    sids = tuple(scenario_ids)
    d = inst.demand
    commodities = tuple((b, s) for b, s in inst.commodities
                        if any(d[k, b, s] > 0 for k in sids))
    nA, nR, nC = len(inst.arcs), inst.n_relays, len(commodities)
    n_flow = nC * nA
    n = n_flow + nR + (1 if robust else 0)
    nb = inst.n_biosensors

    rows, cols, vals = [], [], []
    sense, rhs, names = [], [], []
    groups: dict[str, slice] = {}

    def add_row(coef_cols, coef_vals, s, r, name):
        i = len(rhs)
        rows.extend([i] * len(coef_cols))
        cols.extend(coef_cols)
        vals.extend(coef_vals)
        sense.append(s)
        rhs.append(r)
        names.append(name)

    start = 0
    if robust:
        for k in sids:
            coef = []
            cl = []
            for ci, (b, s) in enumerate(commodities):
                rate = d[k, b, s]
                if rate > 0:
                    cl.extend(range(ci * nA, ci * nA + nA))
                    coef.extend(inst.arc_energy * rate)
            add_row(cl + [n - 1], coef + [-1.0], "L", 0.0, f"senergy_{k}")
        groups["senergy"] = slice(start, len(rhs))
        start = len(rhs)

    # unit-coefficient conservation: -1 at the biosensor, 0 at relays, +1 at the sink
    for ci, (b, s) in enumerate(commodities):
        base = ci * nA
        out_b = inst.out_arcs[b]
        add_row([base + a for a in out_b], [-1.0] * len(out_b), "E", -1.0, f"cons_{b}_{s}_b{b}")
        for r in range(nR):
            v = nb + r
            cl = [base + a for a in inst.in_arcs[v]] + [base + a for a in inst.out_arcs[v]]
            cv = [1.0] * len(inst.in_arcs[v]) + [-1.0] * len(inst.out_arcs[v])
            add_row(cl, cv, "E", 0.0, f"cons_{b}_{s}_r{r}")
        sv = inst.node_index(NodeId(NodeKind.SINK, s))
        in_s = inst.in_arcs[sv]
        add_row([base + a for a in in_s], [1.0] * len(in_s), "E", 1.0, f"cons_{b}_{s}_s{s}")
    groups["cons"] = slice(start, len(rhs))
    start = len(rhs)

    for r in range(nR):
        out_r = inst.out_arcs[nb + r]
        for k in sids:
            cl, cv = [], []
            for ci, (b, s) in enumerate(commodities):
                rate = d[k, b, s]
                if rate > 0:
                    cl.extend(ci * nA + a for a in out_r)
                    cv.extend([rate] * len(out_r))
            add_row(cl + [n_flow + r], cv + [-inst.relays[r].capacity], "L", 0.0, f"cap_{r}_{k}")
    groups["cap"] = slice(start, len(rhs))
    start = len(rhs)

    if nR:
        add_row(list(range(n_flow, n_flow + nR)), [1.0] * nR, "L", float(inst.relay_budget), "card")
    groups["card"] = slice(start, len(rhs))

    objective = np.zeros(n)
    if robust:
        objective[-1] = 1.0
    else:
        (k,) = sids
        for ci, (b, s) in enumerate(commodities):
            objective[ci * nA:(ci + 1) * nA] = inst.arc_energy * d[k, b, s]

    forbidden = np.zeros(n, dtype=bool)
    for ci, (b, s) in enumerate(commodities):
        forbidden[ci * nA:(ci + 1) * nA] = ~inst.usable_arcs(b, s)

    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), n))
    return RobustModel(inst, sids, robust, commodities, A, np.array(sense), np.array(rhs, dtype=float),
                       objective, tuple(names), groups, forbidden)


def build_rob_band_ilp(instance: BanInstance) -> RobustModel:
    """Min-max robust model over every scenario of the instance."""
    return _build(instance, range(len(instance.scenarios)), robust=True)


def build_band_ilp(instance: BanInstance, scenario: Scenario | int) -> RobustModel:
    """Nominal total-energy model for one scenario."""
    idx = scenario if isinstance(scenario, int) else instance.scenarios.index(scenario)
    return _build(instance, [idx], robust=False)


def evaluate(instance: BanInstance, x, y, scenario_ids: Sequence[int] | None = None,
             commodities: Sequence[tuple[int, int]] | None = None) -> Solution:
    """Check a complete 0/1 assignment against every constraint row.

    Flow balance is checked at every vertex, so flow leaking through a
    foreign biosensor or sink is reported as well.
    """
    inst = instance
    sids = list(range(len(inst.scenarios))) if scenario_ids is None else list(scenario_ids)
    comms = list(inst.commodities if commodities is None else commodities)
    nA, nR = len(inst.arcs), inst.n_relays
    if x is None or y is None:
        raise ValueError("incomplete assignment: x and y are required")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (len(comms), nA) or y.shape != (nR,):
        raise ValueError(f"incomplete assignment: expected x{(len(comms), nA)} and y{(nR,)}, "
                         f"got x{x.shape} and y{y.shape}")
    if np.isnan(x).any() or np.isnan(y).any():
        raise ValueError("incomplete assignment: NaN entries")
    if not (np.isin(x, (0.0, 1.0)).all() and np.isin(y, (0.0, 1.0)).all()):
        raise ValueError("assignment must be 0/1")

    violations: list[str] = []
    nV = inst.n_nodes
    tail, head = inst.arc_tail, inst.arc_head
    for ci, (b, s) in enumerate(comms):
        bal = np.bincount(head, weights=x[ci], minlength=nV) - np.bincount(tail, weights=x[ci], minlength=nV)
        want = np.zeros(nV)
        want[b] = -1.0
        want[inst.node_index(NodeId(NodeKind.SINK, s))] = 1.0
        for v in np.flatnonzero(np.abs(bal - want) > BALANCE_TOL):
            violations.append(f"cons_{b}_{s}_{inst.node_at(int(v)).label}")

    d = inst.demand
    rates = np.array([[d[k, b, s] for b, s in comms] for k in sids]).reshape(len(sids), len(comms))
    nb = inst.n_biosensors
    relay_arc = (tail >= nb) & (tail < nb + nR)
    # outflow[ci, r]: arcs leaving relay r used by commodity ci
    if nR:
        outflow = np.zeros((len(comms), nR))
        inflow = np.zeros((len(comms), nR))
        rel_head = (head >= nb) & (head < nb + nR)
        for ci in range(len(comms)):
            outflow[ci] = np.bincount(tail[relay_arc] - nb, weights=x[ci][relay_arc], minlength=nR)
            inflow[ci] = np.bincount(head[rel_head] - nb, weights=x[ci][rel_head], minlength=nR)
        load = rates @ outflow                                  # (|sids|, |R|)
        caps = inst.capacities
        for r in range(nR):
            for j, k in enumerate(sids):
                if load[j, r] > caps[r] * y[r] + CAPACITY_TOL:
                    violations.append(f"cap_{r}_{k}")
        used = (outflow.sum(axis=0) + inflow.sum(axis=0)) > 0
        for r in np.flatnonzero(used & (y < 0.5)):
            violations.append(f"use_{r}")
    if y.sum() > inst.relay_budget:
        violations.append("card")

    per_scenario = rates * (x @ inst.arc_energy)[None, :] if len(comms) else np.zeros((len(sids), 0))
    scen_energy = per_scenario.sum(axis=1)
    energy = float(scen_energy.max()) if len(scen_energy) else 0.0
    return Solution(x=x, y=y, energy_value=energy, feasible=not violations,
                    violations=violations, scenario_energy=scen_energy)
