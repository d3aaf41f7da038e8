"""Relaxation-guided ant-colony heuristic for the min-max design problem.

Each cycle, a few ants build complete routings one commodity at a time. For
every commodity the LP relaxation (with the paths chosen so far fixed) is
re-solved, a handful of candidate paths is extracted from its flow support,
and one is sampled using a mix of pheromone and LP flow. Infeasible designs
are repaired by solving a neighbourhood subproblem exactly; pheromones are
then rewarded or penalised by how each design's gap compares with a moving
average.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .instance import BanInstance
from .lp import LpNumericalError, LpProblem, LpSolution, LpTimeout, SimplexSolver
from .mip import FixMask, MipResult, MipStatus, RootRelaxation, root_relaxation, solve_mip
from .model import RobustModel, Solution, build_rob_band_ilp

log = logging.getLogger(__name__)

TAU_MIN = 1e-6
SUPPORT_TOL = 1e-9
PROB_TOL = 1e-9
GAP_TOL = 1e-9      # gaps below this count as proven optimal


class ConstructionError(RuntimeError):
    """An ant could not route some commodity at all."""


@dataclass
class HeuristicConfig:
    epsilon: float = 0.1
    rho: float = 0.1
    alpha: float = 0.5
    window: int = 4
    candidates: int = 5
    ants: int = 4
    global_time_limit: float = 1800.0
    rins_improve_limit: float = 600.0
    rins_repair_limit: float = 60.0
    seed: int = 0
    # fixed number of cycles; when set, wall-clock limits are ignored and
    # subproblem searches are bounded by node counts instead
    cycles: int | None = None
    rins_repair_nodes: int = 200
    rins_improve_nodes: int = 2000
    literal_shortest_path: bool = False
    cut_rounds: int = 5
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        for name in ("window", "candidates", "ants", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.cycles is not None and self.cycles < 0:
            raise ValueError("cycles must be non-negative")
        for name in ("global_time_limit", "rins_improve_limit", "rins_repair_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def deterministic(self) -> bool:
        return self.cycles is not None


@dataclass
class RoutingState:
    """One simple path (tuple of arc indices) per routed commodity."""

    assigned: dict[tuple[int, int], tuple[int, ...]]
    commodities: tuple[tuple[int, int], ...]

    @property
    def complete(self) -> bool:
        return set(self.assigned) == set(self.commodities)

    def validate(self, instance: BanInstance) -> None:
        nb, nr = instance.n_biosensors, instance.n_relays
        for (b, s), path in self.assigned.items():
            if not path:
                raise ValueError(f"empty path for ({b}, {s})")
            seen = {b}
            v = b
            for a in path:
                if int(instance.arc_tail[a]) != v:
                    raise ValueError(f"path for ({b}, {s}) is not contiguous at arc {a}")
                v = int(instance.arc_head[a])
                if v in seen:
                    raise ValueError(f"path for ({b}, {s}) revisits vertex {v}")
                seen.add(v)
            if v != nb + nr + s:
                raise ValueError(f"path for ({b}, {s}) ends at vertex {v}")

    def flows(self, n_arcs: int) -> np.ndarray:
        x = np.zeros((len(self.commodities), n_arcs))
        for k, c in enumerate(self.commodities):
            if c in self.assigned:
                x[k, list(self.assigned[c])] = 1.0
        return x


class PheromoneTable:
    """Per (commodity, arc) pheromone with an immutable initial snapshot."""

    def __init__(self, tau0: np.ndarray, tau_min: float = TAU_MIN, tau_max: float | None = None):
        self.tau0 = np.array(tau0, dtype=float)
        self.tau0.setflags(write=False)
        self.tau_min = tau_min
        top = float(self.tau0.max(initial=0.0))
        self.tau_max = tau_max if tau_max is not None else max(10.0 * top, tau_min)
        self.tau = np.clip(self.tau0, self.tau_min, self.tau_max)
        self.h = 0

    def snapshot(self) -> np.ndarray:
        out = self.tau.copy()
        out.setflags(write=False)
        return out


@dataclass
class GapReport:
    best_value: float
    lower_bound: float
    trace: list[tuple[float, float]] = field(default_factory=list)
    status: str = "feasible"
    cycles: int = 0
    ants: int = 0

    @property
    def gap(self) -> float:
        return ogap(self.best_value, self.lower_bound)


def ogap(value: float, bound: float) -> float:
    if not math.isfinite(value):
        return 1.0
    if value == 0:
        return 0.0
    return (value - bound) / value


class Trace:
    """Event log; ``t`` is elapsed seconds, or a counter in logical mode."""

    def __init__(self, logical: bool = False, sink: Callable[[dict], None] | None = None):
        self.logical = logical
        self.start = time.monotonic()
        self.events: list[dict] = []
        self.sink = sink

    def emit(self, event: str, value) -> None:
        t = len(self.events) if self.logical else round(time.monotonic() - self.start, 6)
        rec = {"t": t, "event": event, "value": value}
        self.events.append(rec)
        if self.sink is not None:
            self.sink(rec)


# ---------------------------------------------------------------------------
# building blocks


def deterministic_fixing(y_relaxed: Sequence[float], epsilon: float, model: RobustModel | None = None,
                         n_binary: int | None = None) -> FixMask:
    """Fix y_r = 1 wherever the relaxation puts it at 1 - epsilon or above."""
    y = np.asarray(y_relaxed, dtype=float)
    if np.any(y < -1e-9) or np.any(y > 1 + 1e-9):
        raise ValueError("relay values must lie in [0, 1]")
    if model is not None:
        n_binary = model.n_binary
    if n_binary is None:
        n_binary = len(y)
    values = np.full(n_binary, -1, dtype=np.int8)
    values[n_binary - len(y):][y >= 1 - epsilon] = 1
    return FixMask(values)


def order_commodities(instance: BanInstance, commodities: Sequence[tuple[int, int]] | None = None
                      ) -> list[tuple[int, int]]:
    comms = list(instance.commodities if commodities is None else commodities)
    peak = instance.demand.max(axis=0)
    return sorted(comms, key=lambda c: (-peak[c[0], c[1]], c[0], c[1]))


def _shortest_path(instance: BanInstance, arcs: np.ndarray, weights: np.ndarray,
                   source: int, target: int) -> tuple[int, ...] | None:
    tails = instance.arc_tail
    heads = instance.arc_head
    adj: dict[int, list[tuple[int, float, int]]] = {}
    for a, w in zip(arcs.tolist(), weights.tolist()):
        adj.setdefault(int(tails[a]), []).append((int(heads[a]), w, a))
    dist = {source: 0.0}
    pred: dict[int, int] = {}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        if v == target:
            break
        for h, w, a in adj.get(v, ()):
            nd = d + w
            if nd < dist.get(h, math.inf):
                dist[h] = nd
                pred[h] = a
                heapq.heappush(heap, (nd, h))
    if target not in done:
        return None
    path = []
    v = target
    while v != source:
        a = pred[v]
        path.append(a)
        v = int(tails[a])
    return tuple(reversed(path))


def candidate_paths(instance: BanInstance, commodity: tuple[int, int], flow: np.ndarray, limit: int,
                    literal: bool = False) -> list[tuple[int, ...]]:
    """Up to ``limit`` b->s paths from the LP flow support of one commodity.

    ``flow`` holds the commodity's relaxed arc values. Paths minimise
    sum(1 + 1e-6 - w) over support arcs (or sum(w) with ``literal``); after
    each path its lowest-flow arc is removed from the support.
    """
    b, s = commodity
    target = instance.n_biosensors + instance.n_relays + s
    usable = instance.usable_arcs(b, s)
    flow = np.asarray(flow, dtype=float)
    support = np.flatnonzero((flow > SUPPORT_TOL) & usable)
    out: list[tuple[int, ...]] = []
    while len(out) < limit and len(support):
        w = flow[support]
        cost = w if literal else np.maximum(1.0 + 1e-6 - w, 1e-12)
        path = _shortest_path(instance, support, cost, b, target)
        if path is None:
            break
        out.append(path)
        pw = flow[list(path)]
        drop = path[int(np.argmin(pw))]
        support = support[support != drop]
    return out


def fallback_path(instance: BanInstance, commodity: tuple[int, int],
                  allowed_relays: np.ndarray | None = None) -> tuple[int, ...] | None:
    """Minimum-energy b->s path weighted by the commodity's peak rate."""
    b, s = commodity
    usable = instance.usable_arcs(b, s).copy()
    if allowed_relays is not None:
        nb = instance.n_biosensors
        for arr in (instance.arc_tail, instance.arc_head):
            rel = (arr >= nb) & (arr < nb + instance.n_relays)
            idx = np.flatnonzero(rel)
            usable[idx[~allowed_relays[arr[idx] - nb]]] = False
    arcs = np.flatnonzero(usable)
    peak = instance.demand[:, b, s].max()
    cost = instance.arc_energy[arcs] * peak
    return _shortest_path(instance, arcs, cost, b, instance.n_biosensors + instance.n_relays + s)


def path_probabilities(paths: Sequence[Sequence[int]], tau: np.ndarray, eta: np.ndarray,
                       alpha: float) -> np.ndarray:
    if not paths:
        raise ValueError("need at least one candidate path")
    tau_p = np.array([tau[list(p)].sum() for p in paths])
    eta_p = np.array([eta[list(p)].sum() for p in paths])
    score = alpha * tau_p + (1 - alpha) * eta_p
    total = score.sum()
    if not total > 0:
        return np.full(len(paths), 1.0 / len(paths))
    prob = score / total
    assert abs(prob.sum() - 1.0) <= PROB_TOL
    return prob


def derive_relays(instance: BanInstance, state: RoutingState) -> np.ndarray:
    y = np.zeros(instance.n_relays)
    nb = instance.n_biosensors
    for path in state.assigned.values():
        for a in path[:-1]:
            y[int(instance.arc_head[a]) - nb] = 1.0
    return y


def check_feasibility(model: RobustModel, state: RoutingState, y: np.ndarray) -> Solution:
    return model.evaluate(state.flows(model.n_arcs), y)


def pheromone_update(table: PheromoneTable, solutions: Sequence[tuple[float, RoutingState]],
                     v_bar: float, lower_bound: float, commodities: Sequence[tuple[int, int]]) -> bool:
    """Reward or penalise the arcs each solution used; returns False if skipped."""
    ref = ogap(v_bar, lower_bound)
    if ref <= GAP_TOL:
        return False
    index = {c: k for k, c in enumerate(commodities)}
    for value, state in solutions:
        factor = (ref - ogap(value, lower_bound)) / ref
        for c, path in state.assigned.items():
            k = index[c]
            p = list(path)
            table.tau[k, p] += table.tau0[k, p] * factor
    np.clip(table.tau, table.tau_min, table.tau_max, out=table.tau)
    table.h += 1
    return True


def rins_mask(model: RobustModel, incumbent: Solution | tuple, relaxed: np.ndarray, rho: float) -> FixMask:
    if isinstance(incumbent, Solution):
        inc = np.concatenate([incumbent.x.ravel(), incumbent.y])
    else:
        inc = np.concatenate([np.asarray(incumbent[0]).ravel(), np.asarray(incumbent[1])])
    rel = np.asarray(relaxed, dtype=float)[:model.n_binary]
    values = np.full(model.n_binary, -1, dtype=np.int8)
    values[(inc == 0) & (rel <= rho)] = 0
    values[(inc == 1) & (rel >= 1 - rho)] = 1
    return FixMask(values)


def mod_rins(model: RobustModel, incumbent: Solution | tuple, relaxed: np.ndarray, rho: float,
             time_limit: float = math.inf, *, node_limit: int | None = None, use_hint: bool = True,
             cut_rounds: int = 5) -> MipResult:
    """Fix binaries where incumbent and relaxation agree within rho, solve the rest.

    With ``use_hint`` and a feasible incumbent, the incumbent seeds the search,
    so the result is never worse than it.
    """
    if not isinstance(incumbent, Solution):
        incumbent = model.evaluate(*incumbent)
    mask = rins_mask(model, incumbent, relaxed, rho)
    hint = incumbent if use_hint and incumbent.feasible else None
    return solve_mip(model, mask, time_limit, hint, node_limit=node_limit, cut_rounds=cut_rounds)


# ---------------------------------------------------------------------------
# ant construction


@dataclass
class Choice:
    commodity: tuple[int, int]
    paths: list[tuple[int, ...]]
    probabilities: np.ndarray | None
    picked: int
    fallback: bool = False
    rejected: tuple[int, ...] = ()


@dataclass
class AntContext:
    """State shared by every ant of a run; read-only during a cycle."""

    model: RobustModel
    problem: LpProblem            # strengthened relaxation of the fixed problem
    first: LpSolution             # its optimal solution
    order: list[tuple[int, int]]
    config: HeuristicConfig
    mask: FixMask

    @property
    def allowed_relays(self) -> np.ndarray:
        return self.mask.values[self.model.n_flow:] != 0


def set_paths(ctx: AntContext, tau: np.ndarray, rng: np.random.Generator,
              solver: SimplexSolver | None = None, deadline: float | None = None
              ) -> tuple[RoutingState, list[Choice]]:
    """Route every commodity in turn, fixing each sampled path in the LP.

    The relaxation is re-solved after each fixing. A sampled path that makes
    it infeasible cannot lead to a feasible design, so it is rejected and the
    draw is repeated among the remaining candidates.
    """
    model, cfg = ctx.model, ctx.config
    inst = model.instance
    solver = solver or SimplexSolver()
    index = {c: k for k, c in enumerate(model.commodities)}
    n_arcs = model.n_arcs
    lb, ub = ctx.problem.lb.copy(), ctx.problem.ub.copy()
    sol: LpSolution | None = ctx.first
    assigned: dict[tuple[int, int], tuple[int, ...]] = {}
    choices: list[Choice] = []
    deployed: set[int] = set()

    def fixed_bounds(k, path):
        lo, up = lb.copy(), ub.copy()
        cols = slice(k * n_arcs, (k + 1) * n_arcs)
        lo[cols] = 0.0
        up[cols] = 0.0
        lo[[k * n_arcs + a for a in path]] = 1.0
        up[[k * n_arcs + a for a in path]] = 1.0
        # a fixed path through r forces y_r = 1 in any integer solution
        for a in path[:-1]:
            lo[model.relay_offset + _relay(inst, a)] = 1.0
        return lo, up

    def resolve(lo, up, basis):
        """Relaxation under new bounds; None when it could not be solved."""
        if basis is None:
            return None
        try:
            out = solver.solve(ctx.problem.with_bounds(lo, up), basis, deadline=deadline)
        except LpNumericalError:
            return None
        return out

    for c in ctx.order:
        k = index[c]
        paths: list[tuple[int, ...]] = []
        eta = None
        if sol is not None and sol.optimal:
            eta = sol.x[k * n_arcs:(k + 1) * n_arcs]
            paths = candidate_paths(inst, c, eta, cfg.candidates, cfg.literal_shortest_path)
        basis = sol.basis if sol is not None and sol.optimal else None
        if paths:
            prob = path_probabilities(paths, tau[k], eta, cfg.alpha)
            open_ = np.ones(len(paths), dtype=bool)
            rejected: list[int] = []
            while True:
                p = np.where(open_, prob, 0.0)
                p = p / p.sum() if p.sum() > 0 else open_ / open_.sum()
                pick = int(rng.choice(len(paths), p=p))
                lo, up = fixed_bounds(k, paths[pick])
                nxt = resolve(lo, up, basis)
                open_[pick] = False
                if nxt is None or nxt.optimal or not open_.any():
                    break
                rejected.append(pick)
            choices.append(Choice(c, paths, prob, pick, rejected=tuple(rejected)))
            path = paths[pick]
        else:
            path = fallback_path(inst, c, ctx.allowed_relays)
            if path is not None:
                fresh = {_relay(inst, a) for a in path[:-1]} - deployed
                if len(deployed) + len(fresh) > inst.relay_budget:
                    # relays beyond the budget are ruled out; stay on deployed ones if possible
                    only = np.zeros(inst.n_relays, dtype=bool)
                    only[list(deployed)] = True
                    path = fallback_path(inst, c, ctx.allowed_relays & only) or path
            if path is None:
                raise ConstructionError(f"no path for commodity {c}")
            choices.append(Choice(c, [path], None, 0, fallback=True))
            lo, up = fixed_bounds(k, path)
            nxt = resolve(lo, up, basis)
        assigned[c] = path
        deployed.update(_relay(inst, a) for a in path[:-1])
        lb, ub = lo, up
        sol = nxt
    return RoutingState(assigned, model.commodities), choices


def _relay(inst: BanInstance, arc: int) -> int:
    """Relay index at the head of an internal path arc."""
    return int(inst.arc_head[arc]) - inst.n_biosensors


def ant_rng(seed: int, cycle: int, ant: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, cycle, ant]))


# ---------------------------------------------------------------------------
# driver


@dataclass
class _AntOutcome:
    state: RoutingState | None
    solution: Solution | None
    repaired: bool = False
    failed: str | None = None


def run(instance: BanInstance, config: HeuristicConfig | None = None, *,
        model: RobustModel | None = None, root: RootRelaxation | None = None,
        trace: Trace | None = None) -> tuple[Solution | None, GapReport]:
    """Full heuristic; returns the best feasible design (or None) and a gap report."""
    cfg = config or HeuristicConfig()
    model = model or build_rob_band_ilp(instance)
    trace = trace or Trace(logical=cfg.deterministic)
    start = time.monotonic()
    det = cfg.deterministic
    deadline = None if det else start + cfg.global_time_limit

    def remaining():
        return math.inf if deadline is None else deadline - time.monotonic()

    if root is None:
        try:
            root = root_relaxation(model, None, cfg.cut_rounds, deadline=deadline)
        except LpTimeout:
            trace.emit("bound", None)
            return None, GapReport(math.inf, -math.inf, status="no-solution")
    L = root.bound
    trace.emit("bound", L)
    report = GapReport(math.inf, L)
    if not root.solution.optimal:
        report.status = "infeasible"
        return None, report

    best: Solution | None = None

    def offer(sol: Solution | None, source: str) -> None:
        nonlocal best
        if sol is None or not sol.feasible:
            return
        if best is None or sol.energy_value < best.energy_value:
            best = sol
            t = len(trace.events) if det else time.monotonic() - start
            report.trace.append((t, sol.energy_value))
            trace.emit("incumbent", sol.energy_value)

    n_flow = model.n_flow
    y_tlr = root.solution.x[n_flow:model.n_binary]
    mask = deterministic_fixing(np.clip(y_tlr, 0, 1), cfg.epsilon, model)
    fixed = np.flatnonzero(mask.values[n_flow:] == 1)
    if len(fixed) > model.instance.relay_budget:
        # keep the budget satisfiable: only the largest relaxed values stay fixed
        keep = fixed[np.argsort(-y_tlr[fixed], kind="stable")[:model.instance.relay_budget]]
        mask.values[n_flow:][np.setdiff1d(fixed, keep)] = -1
    trace.emit("fixing", int((mask.values == 1).sum()))

    try:
        fix_root = root_relaxation(model, mask, cfg.cut_rounds, deadline=deadline)
        if not fix_root.solution.optimal:
            mask = FixMask.free(model)
            fix_root = root
    except LpTimeout:
        fix_root = root
    # neighbourhoods come from the unfixed strengthened relaxation
    relaxed = root.solution.x
    x_fix, _ = model.split(fix_root.solution.x)
    table = PheromoneTable(np.clip(x_fix, 0.0, None))
    ctx = AntContext(model, fix_root.problem, fix_root.solution,
                     order_commodities(instance, model.commodities), cfg, mask)

    def build(cycle: int, ant: int, tau: np.ndarray) -> _AntOutcome:
        rng = ant_rng(cfg.seed, cycle, ant)
        try:
            state, _ = set_paths(ctx, tau, rng, SimplexSolver(), deadline)
        except ConstructionError as exc:
            return _AntOutcome(None, None, failed=str(exc))
        except LpTimeout:
            return _AntOutcome(None, None, failed="timeout")
        sol = check_feasibility(model, state, derive_relays(instance, state))
        if sol.feasible:
            return _AntOutcome(state, sol)
        limit = cfg.rins_repair_limit if det else min(cfg.rins_repair_limit, max(remaining(), 1e-3))
        # a provably empty neighbourhood is retried with fewer fixings
        for rho in (cfg.rho, cfg.rho / 2, cfg.rho / 4):
            res = mod_rins(model, sol, relaxed, rho, math.inf if det else limit,
                           node_limit=cfg.rins_repair_nodes if det else None, use_hint=False,
                           cut_rounds=cfg.cut_rounds)
            if res.status is not MipStatus.INFEASIBLE:
                break
        if res.incumbent is None:
            return _AntOutcome(state, None, repaired=True, failed=res.status.value)
        return _AntOutcome(_state_from_solution(model, res.incumbent), res.incumbent, repaired=True)

    history: list[float] = []
    cycle = 0
    total_ants = 0
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        while True:
            if det and cycle >= cfg.cycles:
                break
            if not det and remaining() <= 0:
                break
            tau = table.snapshot()
            if pool is not None:
                outcomes = list(pool.map(lambda a: build(cycle, a, tau), range(cfg.ants)))
            else:
                outcomes = []
                for a in range(cfg.ants):
                    if not det and remaining() <= 0:
                        break
                    outcomes.append(build(cycle, a, tau))
            cycle_solutions = []
            for a, out in enumerate(outcomes):
                total_ants += 1
                value = out.solution.energy_value if out.solution is not None else None
                trace.emit("ant", value)
                if out.repaired:
                    trace.emit("repair", value)
                if out.solution is not None:
                    cycle_solutions.append((out.solution.energy_value, out.state))
                    offer(out.solution, "ant")
            cycle += 1
            history.extend(v for v, _ in cycle_solutions)
            if cycle_solutions:
                v_bar = float(np.mean(history[-cfg.window:]))
                updated = pheromone_update(table, cycle_solutions, v_bar, L, model.commodities)
                trace.emit("pheromone", v_bar if updated else None)
            else:
                trace.emit("pheromone", None)
            if best is not None and ogap(best.energy_value, L) <= GAP_TOL:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    report.cycles, report.ants = cycle, total_ants

    if best is not None and ogap(best.energy_value, L) > GAP_TOL:
        res = mod_rins(model, best, relaxed, cfg.rho, math.inf if det else cfg.rins_improve_limit,
                       node_limit=cfg.rins_improve_nodes if det else None, use_hint=True,
                       cut_rounds=cfg.cut_rounds)
        offer(res.incumbent, "final")
        trace.emit("final", best.energy_value)
    else:
        trace.emit("final", best.energy_value if best is not None else None)

    if best is None:
        report.status = "no-solution"
        return None, report
    report.best_value = best.energy_value
    report.status = "optimal" if ogap(best.energy_value, L) <= GAP_TOL else "feasible"
    return best, report


def _state_from_solution(model: RobustModel, sol: Solution) -> RoutingState:
    inst = model.instance
    assigned = {}
    for k, (b, s) in enumerate(model.commodities):
        arcs = set(np.flatnonzero(sol.x[k] > 0.5).tolist())
        path, v = [], b
        target = inst.n_biosensors + inst.n_relays + s
        while v != target:
            a = next(a for a in inst.out_arcs[v] if a in arcs)
            path.append(a)
            v = int(inst.arc_head[a])
        assigned[(b, s)] = tuple(path)
    return RoutingState(assigned, model.commodities)
