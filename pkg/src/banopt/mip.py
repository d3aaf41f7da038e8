"""Exact solvers: LP-based branch and bound, and a brute-force enumerator.

The enumerator never touches the LP code; it exists so the branch and bound
(and everything built on it) can be checked against an independent route.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .lp import LpNumericalError, LpProblem, LpSolution, LpTimeout, SimplexSolver, strengthen
from .model import RobustModel, Solution, evaluate

log = logging.getLogger(__name__)

INT_TOL = 1e-6
PRUNE_RTOL = 1e-10
BEST_BOUND_EVERY = 500


class MipStatus(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE_TIMEOUT = "feasible-timeout"
    INFEASIBLE = "infeasible"
    NO_SOLUTION_TIMEOUT = "no-solution-timeout"


@dataclass
class FixMask:
    """Per binary variable: -1 free, 0 fixed to zero, 1 fixed to one."""

    values: np.ndarray

    @classmethod
    def free(cls, model: RobustModel) -> "FixMask":
        return cls(np.full(model.n_binary, -1, dtype=np.int8))

    @classmethod
    def from_assignment(cls, model: RobustModel, x, y) -> "FixMask":
        return cls(np.concatenate([np.asarray(x).ravel(), np.asarray(y)]).astype(np.int8))

    def copy(self) -> "FixMask":
        return FixMask(self.values.copy())

    @property
    def n_free(self) -> int:
        return int((self.values < 0).sum())

    def bounds(self, model: RobustModel) -> tuple[np.ndarray, np.ndarray]:
        n = model.n_vars
        lb, ub = np.zeros(n), np.ones(n)
        if model.robust:
            ub[-1] = np.inf
        v = self.values
        fixed = v >= 0
        lb[:model.n_binary][fixed] = v[fixed]
        ub[:model.n_binary][fixed] = v[fixed]
        return lb, ub

    def admits(self, model: RobustModel, x, y) -> bool:
        vec = np.concatenate([np.asarray(x).ravel(), np.asarray(y)])
        fixed = self.values >= 0
        return bool(np.all(vec[fixed] == self.values[fixed]))


@dataclass
class MipResult:
    status: MipStatus
    incumbent: Solution | None
    bound: float
    nodes: int
    root_bound: float = -math.inf
    elapsed: float = 0.0
    abandoned: int = 0
    trace: list[tuple[float, float]] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.incumbent.energy_value if self.incumbent is not None else math.inf


@dataclass
class RootRelaxation:
    """A (strengthened) root LP that callers may share between solvers."""

    problem: LpProblem
    solution: LpSolution

    @property
    def bound(self) -> float:
        if not self.solution.optimal:
            return math.inf
        return self.solution.objective * self.problem.obj_scale


def root_relaxation(model: RobustModel, mask: FixMask | None = None, cut_rounds: int = 5,
                    solver: SimplexSolver | None = None, deadline: float | None = None) -> RootRelaxation:
    lb, ub = (mask or FixMask.free(model)).bounds(model)
    problem = model.to_lp(lb, ub)
    problem, sol = strengthen(problem, cut_rounds, solver=solver or SimplexSolver(), deadline=deadline)
    return RootRelaxation(problem, sol)


@dataclass
class _Node:
    bound: float
    fixes: tuple[tuple[int, int], ...]
    basis: object


def _solution_from_vector(model: RobustModel, v: np.ndarray) -> Solution:
    x, y = model.split(np.round(v))
    return model.evaluate(x, y)


def solve_mip(model: RobustModel, mask: FixMask | None = None, time_limit: float = math.inf,
              incumbent_hint: Solution | tuple | None = None, *, node_limit: int | None = None,
              cut_rounds: int = 5, root: RootRelaxation | None = None,
              solver: SimplexSolver | None = None) -> MipResult:
    """Branch and bound over the LP relaxation of ``model`` under ``mask``.

    Depth-first with plunging; every ``BEST_BOUND_EVERY`` nodes the open node
    with the smallest bound is moved to the top of the stack. Branching takes
    the most fractional binary, lowest index on ties. ``root`` may carry a
    precomputed strengthened relaxation for the same model and mask.
    """
    if time_limit <= 0:
        raise ValueError("time_limit must be positive")
    start = time.monotonic()
    deadline = start + time_limit if math.isfinite(time_limit) else None
    mask = mask or FixMask.free(model)
    solver = solver or SimplexSolver()
    trace: list[tuple[float, float]] = []

    incumbent: Solution | None = None
    if incumbent_hint is not None:
        hint = incumbent_hint if isinstance(incumbent_hint, Solution) else model.evaluate(*incumbent_hint)
        if hint.feasible and mask.admits(model, hint.x, hint.y):
            incumbent = hint
            trace.append((0.0, hint.energy_value))

    def finish(status, bound, nodes, root_bound=-math.inf, abandoned=0):
        if incumbent is not None:
            bound = min(bound, incumbent.energy_value)
        return MipResult(status, incumbent, bound, nodes, root_bound,
                         time.monotonic() - start, abandoned, trace)

    if mask.n_free == 0:
        x, y = model.split(np.concatenate([mask.values, [0.0] * (model.n_vars - model.n_binary)]))
        sol = model.evaluate(x, y)
        if sol.feasible:
            incumbent = sol
            trace.append((time.monotonic() - start, sol.energy_value))
            return finish(MipStatus.OPTIMAL, sol.energy_value, 1)
        return finish(MipStatus.INFEASIBLE, math.inf, 1)

    try:
        if root is None:
            root = root_relaxation(model, mask, cut_rounds, solver, deadline)
    except LpTimeout:
        status = MipStatus.FEASIBLE_TIMEOUT if incumbent else MipStatus.NO_SOLUTION_TIMEOUT
        return finish(status, -math.inf, 0)
    problem, root_sol = root.problem, root.solution
    scale = problem.obj_scale
    if not root_sol.optimal:
        return finish(MipStatus.INFEASIBLE if incumbent is None else MipStatus.OPTIMAL, math.inf, 1)
    root_bound = root_sol.objective * scale
    base_lb, base_ub = problem.lb, problem.ub
    nbin = model.n_binary

    def better(bound):
        return incumbent is None or bound < incumbent.energy_value * (1 - PRUNE_RTOL)

    stack: list[_Node] = [_Node(root_bound, (), root_sol.basis)]
    first = root_sol
    nodes = 0
    abandoned_bounds: list[float] = []
    out_of_time = False
    while stack:
        if (deadline is not None and time.monotonic() > deadline) or (node_limit is not None and nodes >= node_limit):
            out_of_time = True
            break
        if nodes and nodes % BEST_BOUND_EVERY == 0:
            i = min(range(len(stack)), key=lambda k: (stack[k].bound, -k))
            stack.append(stack.pop(i))
        node = stack.pop()
        if not better(node.bound):
            continue
        nodes += 1
        if first is not None:
            sol, first = first, None
        else:
            lb, ub = base_lb.copy(), base_ub.copy()
            for j, v in node.fixes:
                lb[j] = ub[j] = v
            try:
                sol = solver.solve(problem.with_bounds(lb, ub), node.basis, deadline=deadline)
            except LpTimeout:
                stack.append(node)
                out_of_time = True
                break
            except LpNumericalError as exc:
                log.warning("abandoning node at depth %d: %s", len(node.fixes), exc)
                abandoned_bounds.append(node.bound)
                continue
        if not sol.optimal:
            continue
        bound = max(sol.objective * scale, node.bound)
        if not better(bound):
            continue
        xb = sol.x[:nbin]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        if frac.max(initial=0.0) <= INT_TOL:
            cand = _solution_from_vector(model, sol.x)
            if cand.feasible:
                if better(cand.energy_value):
                    incumbent = cand
                    trace.append((time.monotonic() - start, cand.energy_value))
                    log.debug("incumbent %.12g at node %d", cand.energy_value, nodes)
                continue
            # a relay whose y sits inside the tolerance while carrying flow:
            # split into "deployed" and "unused with every inbound flow at zero"
            for child in _linking_branches(model, cand, node, base_lb, base_ub, bound, sol.basis):
                stack.append(child)
            continue
        j = int(np.argmax(frac))
        up_first = xb[j] >= 0.5
        down = _Node(bound, node.fixes + ((j, 0),), sol.basis)
        up = _Node(bound, node.fixes + ((j, 1),), sol.basis)
        stack.extend([down, up] if up_first else [up, down])

    open_bounds = [n.bound for n in stack] + abandoned_bounds
    if out_of_time:
        bound = min(open_bounds) if open_bounds else root_bound
        status = MipStatus.FEASIBLE_TIMEOUT if incumbent else MipStatus.NO_SOLUTION_TIMEOUT
        return finish(status, bound, nodes, root_bound, len(abandoned_bounds))
    if abandoned_bounds:
        status = MipStatus.FEASIBLE_TIMEOUT if incumbent else MipStatus.NO_SOLUTION_TIMEOUT
        return finish(status, min(abandoned_bounds), nodes, root_bound, len(abandoned_bounds))
    if incumbent is None:
        return finish(MipStatus.INFEASIBLE, math.inf, nodes, root_bound)
    return finish(MipStatus.OPTIMAL, incumbent.energy_value, nodes, root_bound)


def _linking_branches(model: RobustModel, cand: Solution, node: _Node, lb, ub, bound, basis) -> list[_Node]:
    inst = model.instance
    nb, nA = inst.n_biosensors, model.n_arcs
    fixed = dict(node.fixes)
    load = cand.x.sum(axis=0)
    for r in range(inst.n_relays):
        j = model.n_flow + r
        inflow = [a for a in inst.in_arcs[nb + r] if load[a] > 0]
        if cand.y[r] > 0 or not inflow:
            continue
        children = []
        if ub[j] > 0 and fixed.get(j, 1) == 1:
            children.append(_Node(bound, node.fixes + ((j, 1),), basis))
        zero = [k * nA + a for k in range(len(model.commodities)) for a in inst.in_arcs[nb + r]]
        if all(lb[c] == 0 and fixed.get(c, 0) == 0 for c in zero):
            extra = tuple((c, 0) for c in zero if c not in fixed and ub[c] > 0)
            if fixed.get(j, 0) == 0:
                children.append(_Node(bound, node.fixes + ((j, 0),) * (j not in fixed) + extra, basis))
        return children
    return []


# ---------------------------------------------------------------------------
# brute force


class SizeGuardError(RuntimeError):
    pass


@dataclass
class SizeGuard:
    max_paths: int = 200_000      # simple paths per commodity
    max_relays: int = 24          # 2**max_relays relay subsets


def simple_paths(instance, b: int, s: int, limit: int | None = None,
                 max_energy: float = math.inf, max_relays: int | None = None
                 ) -> tuple[list[tuple[int, ...]], bool]:
    """Simple b->s paths (tuples of arc ids) with energy at most ``max_energy``
    and at most ``max_relays`` intermediate relays.

    Also reports whether some path was skipped because of the energy cap.
    """
    target = instance.n_biosensors + instance.n_relays + s
    head = instance.arc_head
    energy = instance.arc_energy
    out = instance.out_arcs
    paths: list[tuple[int, ...]] = []
    on_path = {b}
    arcs: list[int] = []
    capped = [False]

    def dfs(v, e):
        for a in out[v]:
            h = int(head[a])
            if h != target and (instance.relay_of(h) is None or h in on_path):
                continue
            ea = e + energy[a]
            if ea > max_energy:
                capped[0] = True
                continue
            if h == target:
                paths.append(tuple(arcs + [a]))
                if limit is not None and len(paths) > limit:
                    raise SizeGuardError(f"more than {limit} simple paths from b{b} to s{s}")
            elif max_relays is None or len(arcs) < max_relays:
                on_path.add(h)
                arcs.append(a)
                dfs(h, ea)
                arcs.pop()
                on_path.remove(h)

    dfs(b, 0.0)
    return paths, capped[0]


def enumerate_exact(instance, size_guard: SizeGuard | None = None,
                    model: RobustModel | None = None) -> Solution | None:
    """Optimal min-max design by exhaustive search over simple paths.

    Every commodity takes one simple path; relays are deployed exactly where
    a path passes. Paths are enumerated under a per-commodity energy cap that
    grows until every excluded path provably cannot beat the best design
    found, so the result is exact. Inside the search, partial combinations are
    dropped once their worst-scenario energy plus the cheapest completion
    reaches the best value, or a capacity or the relay budget is exceeded.
    Returns ``None`` when no design is feasible.
    """
    guard = size_guard or SizeGuard()
    if instance.n_relays > guard.max_relays:
        raise SizeGuardError(f"{instance.n_relays} relays exceed the guard of {guard.max_relays}")
    sids = list(range(len(instance.scenarios))) if model is None else list(model.scenario_ids)
    comms = list(instance.commodities) if model is None else list(model.commodities)
    n_arcs = len(instance.arcs)
    if not comms:
        sol = evaluate(instance, np.zeros((0, n_arcs)), np.zeros(instance.n_relays), sids, comms)
        return sol if sol.feasible else None
    d = instance.demand
    rates = np.array([[d[k, b, s] for k in sids] for b, s in comms])       # (|C|, |sids|)
    nb = instance.n_biosensors
    caps = instance.capacities
    budget = instance.relay_budget

    min_e = np.empty(len(comms))
    for k, (b, s) in enumerate(comms):
        p = _cheapest_path_energy(instance, b, s)
        if p is None:
            return None
        min_e[k] = p
    # cheapest total of all other commodities, per scenario
    rest = (min_e[:, None] * rates).sum(axis=0)[None, :] - min_e[:, None] * rates

    order = sorted(range(len(comms)), key=lambda k: (-rates[k].max(), k))
    tail_lb = np.zeros((len(order) + 1, len(sids)))
    for i in range(len(order) - 1, -1, -1):
        k = order[i]
        tail_lb[i] = tail_lb[i + 1] + min_e[k] * rates[k]

    best = [math.inf, None]
    chosen: list = [None] * len(comms)
    load = np.zeros((instance.n_relays, len(sids)))
    relay_count = np.zeros(instance.n_relays, dtype=np.int64)

    def search(i, scen, options):
        if i == len(order):
            value = scen.max()
            if value < best[0]:
                best[0], best[1] = value, list(chosen)
            return
        k = order[i]
        for e, p, relays in options[k]:
            new = scen + e * rates[k]
            if (new + tail_lb[i + 1]).max() >= best[0]:
                break  # options are sorted by energy, later ones are no better
            for r in relays:
                load[r] += rates[k]
            ok = not any((load[r] > caps[r] + 1e-6).any() for r in relays)
            if ok:
                fresh = {r for r in relays if relay_count[r] == 0}
                ok = int((relay_count > 0).sum()) + len(fresh) <= budget
            if ok:
                for r in relays:
                    relay_count[r] += 1
                chosen[k] = p
                search(i + 1, new, options)
                for r in relays:
                    relay_count[r] -= 1
            for r in relays:
                load[r] -= rates[k]

    cap = min_e * 1.25
    while True:
        options, truncated = [], []
        for k, (b, s) in enumerate(comms):
            paths, cut = simple_paths(instance, b, s, guard.max_paths, cap[k], budget)
            options.append(_undominated(instance, paths))
            truncated.append(cut)
        search(0, np.zeros(len(sids)), options)
        if not any(truncated):
            break
        if best[1] is None:
            cap = cap * 2
            continue
        # an excluded path of energy e costs at least max over scenarios of
        # e * rate + rest; it cannot win once that reaches the best value
        with np.errstate(divide="ignore"):
            need = np.where(rates > 0, (best[0] - rest) / np.where(rates > 0, rates, 1.0), math.inf).min(axis=1)
        if np.all(~np.array(truncated) | (cap >= need)):
            break
        cap = np.maximum(cap, need)

    if best[1] is None:
        return None
    x = np.zeros((len(comms), n_arcs))
    y = np.zeros(instance.n_relays)
    for k, p in enumerate(best[1]):
        x[k, list(p)] = 1.0
        for a in p[:-1]:
            y[int(instance.arc_head[a]) - nb] = 1.0
    return evaluate(instance, x, y, sids, comms)


def _undominated(instance, paths) -> list[tuple[float, tuple[int, ...], tuple[int, ...]]]:
    """(energy, path, relays) options sorted by energy, dominated paths dropped.

    Loads and the relay count depend only on the set of relays a path visits,
    so a path is useless when another visits a subset of its relays for no
    more energy.
    """
    nb = instance.n_biosensors
    best: dict[frozenset, tuple[float, tuple[int, ...]]] = {}
    for p in paths:
        e = float(sum(instance.arc_energy[a] for a in p))
        key = frozenset(int(instance.arc_head[a]) - nb for a in p[:-1])
        if key not in best or (e, p) < best[key]:
            best[key] = (e, p)
    ranked = sorted(best.items(), key=lambda kv: (kv[1][0], kv[1][1]))
    kept: list[tuple[frozenset, float, tuple[int, ...]]] = []
    for key, (e, p) in ranked:
        if not any(k2 <= key and e2 <= e for k2, e2, _ in kept):
            kept.append((key, e, p))
    return [(e, p, tuple(int(instance.arc_head[a]) - nb for a in p[:-1])) for _, e, p in kept]


def _cheapest_path_energy(instance, b: int, s: int) -> float | None:
    """Dijkstra over relays only; the energy of the cheapest b->s path."""
    target = instance.n_biosensors + instance.n_relays + s
    dist = {b: 0.0}
    heap = [(0.0, b)]
    while heap:
        dv, v = heapq.heappop(heap)
        if v == target:
            return dv
        if dv > dist.get(v, math.inf):
            continue
        for a in instance.out_arcs[v]:
            h = int(instance.arc_head[a])
            if h != target and instance.relay_of(h) is None:
                continue
            nd = dv + float(instance.arc_energy[a])
            if nd < dist.get(h, math.inf):
                dist[h] = nd
                heapq.heappush(heap, (nd, h))
    return None
