"""Equilibrium and optimum computation.

Non-atomic problems are solved by conditional-gradient descent on the
Beckmann potential (equilibria) or on total cost via marginal costs
(optima): each step moves flow of one group from its costliest used path
toward its cheapest path, with the step length found by bisecting the
derivative of the 1-D convex restriction.  Atomic problems are solved
exactly: exhaustive enumeration over user-class assignments when the
state space fits the budget, best-response dynamics otherwise.  Mixed
equilibria on small two-path-per-group games are found by per-group
bisection of the expected-cost indifference condition, with expectations
computed by exact convolution over the users touching each arc.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Callable, Mapping, Optional, Sequence

from .game import (
    AtomicProfile,
    CostPolynomial,
    Game,
    MixedProfile,
    Number,
    PathFlow,
)

USED_PATH_REL_TOL = Fraction(1, 10**12)  # f_p > 1e-12 * d_k counts as used


class BudgetExceededError(RuntimeError):
    """The exact state space is larger than the configured enumeration budget."""


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-9
    max_iterations: int = 100_000
    rng_seed: int = 0
    enumeration_budget: int = 10_000_000

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.enumeration_budget < 1:
            raise ValueError("enumeration budget must be >= 1")


@dataclass
class EquilibriumResult:
    flow: object  # PathFlow, AtomicProfile, or MixedProfile
    kind: str  # nonatomic-ne | nonatomic-so | atomic-ne | atomic-so | mixed-ne
    residual: float
    iterations: int
    exact: bool
    converged: bool = True
    cost: Optional[Number] = None
    multiplicity: int = 1
    note: str = ""
    wall_time: float = 0.0

    def to_document(self, game: Game) -> dict:
        if isinstance(self.flow, PathFlow):
            flow_doc = {f"{game.groups[gi].gid}/{pi}": float(v) for (gi, pi), v in self.flow.items()}
        elif isinstance(self.flow, AtomicProfile):
            flow_doc = {game.groups[gi].gid: list(picks) for gi, picks in enumerate(self.flow.choices)}
        elif isinstance(self.flow, MixedProfile):
            flow_doc = {game.groups[gi].gid: [[float(p) for p in row] for row in rows]
                        for gi, rows in enumerate(self.flow.probabilities)}
        else:
            flow_doc = None
        return {
            "kind": self.kind,
            "flow": flow_doc,
            "residual": float(self.residual),
            "iterations": self.iterations,
            "exact": self.exact,
            "converged": self.converged,
            "cost": None if self.cost is None else float(self.cost),
            "note": self.note,
            "wall_time": self.wall_time,
        }


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _float_polys(game: Game, polys: Optional[Mapping[str, CostPolynomial]] = None) -> dict:
    src = polys if polys is not None else game.arcs
    return {aid: [float(c) for c in p.coefficients] for aid, p in src.items()}


def _horner(coeffs: Sequence[float], x: float) -> float:
    acc = coeffs[0]
    for c in coeffs[1:]:
        acc = acc * x + c
    return acc


def beckmann_potential(game: Game, flow: PathFlow) -> Number:
    """Sum over arcs of the integral of the arc cost from 0 to the arc flow."""
    fa = game.arc_flow(flow)
    return sum(game.arcs[aid].integral_value(v) for aid, v in fa.items())


def verify_wardrop(game: Game, flow: PathFlow) -> float:
    """Worst per-group gap between the costliest used path and the cheapest path.

    A path counts as used when its flow exceeds 1e-12 times the group demand.
    The gap is 0 exactly when the flow satisfies the first principle: every
    used path is a cheapest path of its group.
    """
    arc_costs = game.arc_cost_map(flow)
    worst = 0.0
    for gi, g in enumerate(game.groups):
        used_thresh = g.total_demand * USED_PATH_REL_TOL
        costs = [game.path_cost(flow, gi, pi, arc_costs) for pi in range(g.n_paths)]
        cheapest = min(costs)
        for pi, c in enumerate(costs):
            if flow.value(gi, pi) > used_thresh:
                gap = float(c - cheapest)
                if gap > worst:
                    worst = gap
    return worst


def epsilon_ne_residual(game: Game, flow: PathFlow) -> Number:
    """Largest variational-inequality violation over all feasible flows.

    The maximum of sum_a tau_a(f_a) (f_a - f'_a) over feasible f' is linear
    in f', so the optimum sits at a vertex: each group routes everything on
    its cheapest path.  The residual is therefore
    sum_k ( sum_p f_p tau_p(f) - d_k min_p tau_p(f) ), which is 0 exactly
    at a non-atomic equilibrium.
    """
    for gi, g in enumerate(game.groups):
        s = sum(flow.value(gi, pi) for pi in range(g.n_paths))
        if abs(s - g.total_demand) > 1e-9 * (1 + abs(float(g.total_demand))):
            raise ValueError(f"infeasible flow: group {g.gid!r} routes {s} of {g.total_demand}")
    arc_costs = game.arc_cost_map(flow)
    total = 0
    for gi, g in enumerate(game.groups):
        costs = [game.path_cost(flow, gi, pi, arc_costs) for pi in range(g.n_paths)]
        routed = sum(flow.value(gi, pi) * costs[pi] for pi in range(g.n_paths))
        total += routed - g.total_demand * min(costs)
    return total


# ---------------------------------------------------------------------------
# Non-atomic solvers (conditional gradient with exact line search)
# ---------------------------------------------------------------------------

def _equilibrate(game: Game, config: SolverConfig, direction_polys: dict,
                 start: Optional[PathFlow], kind: str) -> EquilibriumResult:
    """Drive every group's path costs (w.r.t. ``direction_polys``) to equality.

    Each move is a conditional-gradient step restricted to one group: shift
    mass from the group's costliest used path toward its cheapest path, the
    amount fixed by bisecting the monotone derivative of the underlying
    convex objective along that segment.
    """
    t0 = time.perf_counter()
    keys = game.path_keys
    n = len(keys)
    gpaths = {key: game.path_arcs(*key) for key in keys}
    group_slots = [[i for i, key in enumerate(keys) if key[0] == gi]
                   for gi in range(len(game.groups))]

    if start is None:
        flows = [0.0] * n
        for gi, g in enumerate(game.groups):
            flows[group_slots[gi][0]] = float(g.total_demand)
    else:
        flows = [float(v) for v in start.values()]

    arc_flow = {aid: 0.0 for aid in game.arc_ids}
    for i, key in enumerate(keys):
        for aid in gpaths[key]:
            arc_flow[aid] += flows[i]

    def dir_cost(aid: str, x: float) -> float:
        return _horner(direction_polys[aid], x)

    def path_dir_cost(i: int) -> float:
        return sum(dir_cost(aid, arc_flow[aid]) for aid in gpaths[keys[i]])

    moves = 0
    converged = False
    budget = config.max_iterations
    while moves < budget:
        worst_violation = 0.0
        for gi, g in enumerate(game.groups):
            slots = group_slots[gi]
            if len(slots) == 1:
                continue
            used_thresh = float(g.total_demand) * 1e-12
            inner = 0
            while inner < len(slots) * 8 and moves < budget:
                costs = [path_dir_cost(i) for i in slots]
                cheap_pos = min(range(len(slots)), key=lambda j: (costs[j], j))
                used = [j for j in range(len(slots)) if flows[slots[j]] > used_thresh]
                exp_pos = max(used, key=lambda j: (costs[j], -j))
                gap = costs[exp_pos] - costs[cheap_pos]
                if gap <= config.tolerance * (1.0 + abs(costs[cheap_pos])):
                    break
                src, dst = slots[exp_pos], slots[cheap_pos]
                amount = _segment_step(gpaths[keys[src]], gpaths[keys[dst]],
                                       arc_flow, dir_cost, flows[src])
                flows[src] -= amount
                flows[dst] += amount
                src_set, dst_set = set(gpaths[keys[src]]), set(gpaths[keys[dst]])
                for aid in src_set - dst_set:
                    arc_flow[aid] -= amount
                for aid in dst_set - src_set:
                    arc_flow[aid] += amount
                moves += 1
                inner += 1
        # convergence check across all groups
        all_ok = True
        for gi, g in enumerate(game.groups):
            slots = group_slots[gi]
            used_thresh = float(g.total_demand) * 1e-12
            costs = [path_dir_cost(i) for i in slots]
            cheapest = min(costs)
            for j, i in enumerate(slots):
                if flows[i] > used_thresh and costs[j] - cheapest > config.tolerance * (1.0 + abs(cheapest)):
                    all_ok = False
                    worst_violation = max(worst_violation, costs[j] - cheapest)
        if all_ok:
            converged = True
            break

    flow = PathFlow(game, [max(v, 0.0) for v in flows])
    residual = verify_wardrop(game, flow) if kind == "nonatomic-ne" else _dir_residual(
        game, flow, direction_polys)
    cost = game.total_cost(flow.as_float())
    return EquilibriumResult(flow=flow, kind=kind, residual=float(residual),
                             iterations=moves, exact=False, converged=converged,
                             cost=cost, wall_time=time.perf_counter() - t0)


def _dir_residual(game: Game, flow: PathFlow, direction_polys: dict) -> float:
    fa = game.arc_flow(flow)
    arc_costs = {aid: _horner(direction_polys[aid], float(fa[aid])) for aid in game.arc_ids}
    worst = 0.0
    for gi, g in enumerate(game.groups):
        used_thresh = float(g.total_demand) * 1e-12
        costs = [sum(arc_costs[aid] for aid in g.paths[pi]) for pi in range(g.n_paths)]
        cheapest = min(costs)
        for pi, c in enumerate(costs):
            if float(flow.value(gi, pi)) > used_thresh:
                worst = max(worst, c - cheapest)
    return worst


def _segment_step(src_arcs, dst_arcs, arc_flow, dir_cost, available: float) -> float:
    """Exact line search: bisect the derivative of the objective along the move."""
    src_only = [a for a in src_arcs if a not in set(dst_arcs)]
    dst_only = [a for a in dst_arcs if a not in set(src_arcs)]

    def slope(m: float) -> float:
        return (sum(dir_cost(a, arc_flow[a] + m) for a in dst_only)
                - sum(dir_cost(a, arc_flow[a] - m) for a in src_only))

    hi = available
    if slope(hi) <= 0.0:
        return hi
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if slope(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, available):
            break
    return 0.5 * (lo + hi)


def solve_nonatomic_ne(game: Game, config: SolverConfig = SolverConfig(),
                       start: Optional[PathFlow] = None) -> EquilibriumResult:
    """Non-atomic equilibrium: minimize the Beckmann potential over feasible flows."""
    return _equilibrate(game, config, _float_polys(game), start, "nonatomic-ne")


def solve_nonatomic_so(game: Game, config: SolverConfig = SolverConfig(),
                       start: Optional[PathFlow] = None) -> EquilibriumResult:
    """Non-atomic optimum: minimize total cost, i.e. equilibrate marginal costs."""
    marginals = {aid: p.marginal() for aid, p in game.arcs.items()}
    return _equilibrate(game, config, _float_polys(game, marginals), start, "nonatomic-so")


# ---------------------------------------------------------------------------
# Atomic enumeration
# ---------------------------------------------------------------------------

def _group_components(game: Game) -> list:
    """Partition group indices into components linked by shared arcs."""
    n = len(game.groups)
    arc_owner: dict[str, int] = {}
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for gi, g in enumerate(game.groups):
        for path in g.paths:
            for aid in path:
                if aid in arc_owner:
                    union(arc_owner[aid], gi)
                else:
                    arc_owner[aid] = gi
    comps: dict[int, list] = {}
    for gi in range(n):
        comps.setdefault(find(gi), []).append(gi)
    return [sorted(v) for _, v in sorted(comps.items())]


@dataclass(frozen=True)
class _UserClass:
    gi: int
    demand: Number
    user_slots: tuple  # indices of users in the group sharing this demand

    @property
    def size(self) -> int:
        return len(self.user_slots)


def _user_classes(game: Game, group_indices: Sequence[int]) -> list:
    classes = []
    for gi in group_indices:
        g = game.groups[gi]
        by_demand: dict = {}
        for ui, d in enumerate(g.demands):
            by_demand.setdefault(d, []).append(ui)
        for d, slots in by_demand.items():
            classes.append(_UserClass(gi, d, tuple(slots)))
    return classes


def _compositions(total: int, parts: int):
    """All ways to split ``total`` identical users over ``parts`` paths."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _class_state_count(game: Game, classes: Sequence[_UserClass]) -> int:
    count = 1
    for cls in classes:
        p = game.groups[cls.gi].n_paths
        count *= comb(cls.size + p - 1, p - 1)
    return count


def _multiplicity(counts: Sequence[int]) -> int:
    total = sum(counts)
    m = 1
    for c in counts:
        m *= comb(total, c)
        total -= c
    return m


class _ComponentScan:
    """Exhaustive scan over count-based atomic states of one component."""

    def __init__(self, game: Game, group_indices: Sequence[int]):
        self.game = game
        self.groups = list(group_indices)
        self.classes = _user_classes(game, group_indices)
        self.arc_ids = sorted({aid for gi in group_indices
                               for path in game.groups[gi].paths for aid in path})

    def state_count(self) -> int:
        return _class_state_count(self.game, self.classes)

    def scan(self, visit: Callable):
        """Call ``visit(assignment, arc_flow)`` for every count state.

        ``assignment`` maps class position to its per-path count tuple.
        """
        game = self.game
        arc_flow = {aid: Fraction(0) for aid in self.arc_ids}
        assignment: list = [None] * len(self.classes)

        def rec(ci: int):
            if ci == len(self.classes):
                visit(assignment, arc_flow)
                return
            cls = self.classes[ci]
            g = game.groups[cls.gi]
            for counts in _compositions(cls.size, g.n_paths):
                for pi, c in enumerate(counts):
                    if c:
                        add = cls.demand * c
                        for aid in g.paths[pi]:
                            arc_flow[aid] += add
                assignment[ci] = counts
                rec(ci + 1)
                for pi, c in enumerate(counts):
                    if c:
                        add = cls.demand * c
                        for aid in g.paths[pi]:
                            arc_flow[aid] -= add
            assignment[ci] = None

        rec(0)

    def is_equilibrium(self, assignment, arc_flow) -> bool:
        """No user class can strictly improve by a unilateral path change."""
        game = self.game
        costs = {aid: game.arcs[aid].value(arc_flow[aid]) for aid in self.arc_ids}
        for ci, cls in enumerate(self.classes):
            g = game.groups[cls.gi]
            counts = assignment[ci]
            d = cls.demand
            for pi in range(g.n_paths):
                if counts[pi] == 0:
                    continue
                here = set(g.paths[pi])
                stay_cost = sum(costs[aid] for aid in g.paths[pi])
                for qi in range(g.n_paths):
                    if qi == pi:
                        continue
                    move_cost = 0
                    for aid in g.paths[qi]:
                        move_cost += costs[aid] if aid in here else game.arcs[aid].value(arc_flow[aid] + d)
                    if move_cost < stay_cost:
                        return False
        return True

    def total_cost(self, arc_flow) -> Number:
        game = self.game
        return sum(v * game.arcs[aid].value(v) for aid, v in arc_flow.items())

    def representative(self, assignment) -> dict:
        """Per-group user choices realizing the counts (users filled in slot order)."""
        picks: dict[int, list] = {gi: [None] * self.game.groups[gi].n_users for gi in self.groups}
        for ci, cls in enumerate(self.classes):
            counts = assignment[ci]
            it = iter(cls.user_slots)
            for pi, c in enumerate(counts):
                for _ in range(c):
                    picks[cls.gi][next(it)] = pi
        return picks

    def assignment_multiplicity(self, assignment) -> int:
        m = 1
        for ci, cls in enumerate(self.classes):
            m *= _multiplicity(assignment[ci])
        return m


@dataclass
class AtomicEquilibria:
    """All pure equilibria of a game, found by exhaustive exact enumeration.

    ``equilibria`` lists one representative per user-symmetry class with its
    multiplicity; ``worst`` and ``best`` are by total cost.  Empty when the
    game (necessarily weighted) has no pure equilibrium.
    """

    equilibria: list
    worst: Optional[EquilibriumResult]
    best: Optional[EquilibriumResult]
    states_scanned: int
    exact: bool


def enumerate_atomic_equilibria(game: Game, config: SolverConfig = SolverConfig()) -> AtomicEquilibria:
    """Exhaustively test the unilateral-deviation predicate over all states.

    Users of equal demand within a group are interchangeable, so states are
    enumerated as per-class path counts; groups that share no arcs are
    enumerated independently and recombined.  Raises BudgetExceededError when
    the state space exceeds the configured budget (callers should fall back
    to best-response dynamics).
    """
    t0 = time.perf_counter()
    comps = [_ComponentScan(game, idxs) for idxs in _group_components(game)]
    scanned_budget = 0
    for comp in comps:
        n = comp.state_count()
        scanned_budget += n
        if scanned_budget > config.enumeration_budget:
            raise BudgetExceededError(
                f"state space needs {scanned_budget}+ states, budget is "
                f"{config.enumeration_budget}")

    per_comp: list[list] = []
    scanned = 0
    for comp in comps:
        found: list = []

        def visit(assignment, arc_flow, comp=comp, found=found):
            if comp.is_equilibrium(assignment, arc_flow):
                found.append((comp.representative(assignment),
                              comp.total_cost(arc_flow),
                              comp.assignment_multiplicity(assignment)))

        comp.scan(visit)
        scanned += comp.state_count()
        per_comp.append(found)

    if any(not found for found in per_comp):
        return AtomicEquilibria([], None, None, scanned, True)

    exact = game.is_rational

    def combine(combo, note=""):
        # Component costs add and multiplicities multiply (disjoint arc sets).
        cost = sum(c for _, c, _ in combo)
        mult = 1
        picks = {}
        for rep, _, m in combo:
            mult *= m
            picks.update(rep)
        profile = AtomicProfile(tuple(tuple(picks[gi]) for gi in range(len(game.groups))))
        return EquilibriumResult(flow=profile, kind="atomic-ne", residual=0.0,
                                 iterations=scanned, exact=exact, cost=cost,
                                 multiplicity=mult, note=note,
                                 wall_time=time.perf_counter() - t0)

    worst = combine([max(found, key=lambda e: e[1]) for found in per_comp], "worst")
    best = combine([min(found, key=lambda e: e[1]) for found in per_comp], "best")

    combo_count = 1
    for found in per_comp:
        combo_count *= len(found)
    results = []
    if combo_count <= 100_000:
        results = [combine(combo) for combo in itertools.product(*per_comp)]
    return AtomicEquilibria(results, worst, best, scanned, exact)


def solve_atomic_so(game: Game, config: SolverConfig = SolverConfig()) -> EquilibriumResult:
    """Exact minimizer of total cost over all atomic states."""
    t0 = time.perf_counter()
    comps = [_ComponentScan(game, idxs) for idxs in _group_components(game)]
    for comp in comps:
        if comp.state_count() > config.enumeration_budget:
            raise BudgetExceededError(
                f"state space {comp.state_count()} exceeds enumeration budget")

    picks: dict[int, list] = {}
    total = 0
    scanned = 0
    for comp in comps:
        best = None

        def visit(assignment, arc_flow, comp=comp):
            nonlocal best
            cost = comp.total_cost(arc_flow)
            if best is None or cost < best[1]:
                best = ([tuple(a) for a in assignment], cost)

        comp.scan(visit)
        scanned += comp.state_count()
        picks.update(comp.representative(best[0]))
        total += best[1]

    profile = AtomicProfile(tuple(tuple(picks[gi]) for gi in range(len(game.groups))))
    return EquilibriumResult(flow=profile, kind="atomic-so", residual=0.0,
                             iterations=scanned, exact=game.is_rational, cost=total,
                             wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Best-response dynamics
# ---------------------------------------------------------------------------

def best_response_atomic(game: Game, config: SolverConfig = SolverConfig(),
                         initial: Optional[AtomicProfile] = None) -> EquilibriumResult:
    """Iterate single-user best responses until no user can strictly improve.

    Ties break toward the currently used path, then the lowest path index,
    so runs are deterministic.  Guaranteed to terminate on unweighted games
    (potential descent); weighted games may cycle, in which case the budget
    expires and the best iterate is returned flagged as non-converged.
    """
    t0 = time.perf_counter()
    if initial is None:
        initial = AtomicProfile(tuple(tuple(0 for _ in g.demands) for g in game.groups))
    initial.validate(game)

    choices = [list(picks) for picks in initial.choices]
    arc_flow = {aid: Fraction(0) for aid in game.arc_ids}
    for gi, g in enumerate(game.groups):
        for ui, d in enumerate(g.demands):
            for aid in g.paths[choices[gi][ui]]:
                arc_flow[aid] += d

    moves = 0
    converged = False
    while moves <= config.max_iterations:
        improved = False
        for gi, g in enumerate(game.groups):
            for ui, d in enumerate(g.demands):
                cur = choices[gi][ui]
                cur_arcs = set(g.paths[cur])
                cur_cost = sum(game.arcs[aid].value(arc_flow[aid]) for aid in g.paths[cur])
                best_pi, best_cost = cur, cur_cost
                for pi in range(g.n_paths):
                    if pi == cur:
                        continue
                    cost = 0
                    for aid in g.paths[pi]:
                        x = arc_flow[aid] if aid in cur_arcs else arc_flow[aid] + d
                        cost += game.arcs[aid].value(x)
                    if cost < best_cost:
                        best_pi, best_cost = pi, cost
                if best_pi != cur:
                    for aid in cur_arcs - set(g.paths[best_pi]):
                        arc_flow[aid] -= d
                    for aid in set(g.paths[best_pi]) - cur_arcs:
                        arc_flow[aid] += d
                    choices[gi][ui] = best_pi
                    moves += 1
                    improved = True
                    if moves > config.max_iterations:
                        break
            if moves > config.max_iterations:
                break
        if not improved:
            converged = True
            break

    profile = AtomicProfile(tuple(tuple(row) for row in choices))
    cost = sum(v * game.arcs[aid].value(v) for aid, v in arc_flow.items())
    return EquilibriumResult(flow=profile, kind="atomic-ne", residual=0.0 if converged else math.inf,
                             iterations=moves, exact=game.is_rational and converged,
                             converged=converged, cost=cost,
                             note="" if converged else "budget exhausted without equilibrium",
                             wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Exact expectations for mixed profiles
# ---------------------------------------------------------------------------

def arc_flow_distribution(game: Game, profile: MixedProfile, arc_id: str) -> dict:
    """Exact distribution of one arc's random flow under a mixed profile."""
    dist = {0: 1.0}
    exact = game.is_rational
    if exact:
        dist = {Fraction(0): Fraction(1)}
    for gi, g in enumerate(game.groups):
        touching = [pi for pi in range(g.n_paths) if arc_id in g.paths[pi]]
        if not touching:
            continue
        for ui, d in enumerate(g.demands):
            q = sum(profile.probabilities[gi][ui][pi] for pi in touching)
            if q == 0:
                continue
            new: dict = {}
            if q == 1:
                for v, p in dist.items():
                    new[v + d] = new.get(v + d, 0) + p
            else:
                for v, p in dist.items():
                    new[v] = new.get(v, 0) + p * (1 - q)
                    new[v + d] = new.get(v + d, 0) + p * q
            dist = new
    return dist


def expected_arc_statistics(game: Game, profile: MixedProfile) -> dict:
    """Per-arc (E[cost], E[flow * cost]) from the exact flow distribution."""
    out = {}
    for aid in game.arc_ids:
        dist = arc_flow_distribution(game, profile, aid)
        poly = game.arcs[aid]
        e_cost = sum(p * poly.value(v) for v, p in dist.items())
        e_flow_cost = sum(p * v * poly.value(v) for v, p in dist.items())
        out[aid] = (e_cost, e_flow_cost)
    return out


def expected_path_costs(game: Game, profile: MixedProfile,
                        arc_stats: Optional[dict] = None) -> dict:
    if arc_stats is None:
        arc_stats = expected_arc_statistics(game, profile)
    return {(gi, pi): sum(arc_stats[aid][0] for aid in game.groups[gi].paths[pi])
            for (gi, pi) in game.path_keys}


def expected_total_cost(game: Game, profile: MixedProfile,
                        arc_stats: Optional[dict] = None) -> Number:
    """Exact expected total cost sum_a E[f_a tau_a(f_a)] of the random flow."""
    if arc_stats is None:
        arc_stats = expected_arc_statistics(game, profile)
    return sum(stats[1] for stats in arc_stats.values())


def mixed_ne_residual(game: Game, profile: MixedProfile) -> float:
    """Worst per-group gap between used-path and cheapest expected costs.

    Zero exactly when every path with positive expected flow has minimal
    expected cost within its group, which is the equilibrium predicate for
    mixed profiles (and, on degenerate profiles, the first principle).
    """
    profile.validate(game)
    exp_flow = profile.expected_flow(game)
    path_costs = expected_path_costs(game, profile)
    worst = 0.0
    for gi, g in enumerate(game.groups):
        used_thresh = g.total_demand * USED_PATH_REL_TOL
        costs = [path_costs[(gi, pi)] for pi in range(g.n_paths)]
        cheapest = min(costs)
        for pi, c in enumerate(costs):
            if exp_flow.value(gi, pi) > used_thresh:
                worst = max(worst, float(c - cheapest))
    return worst


# ---------------------------------------------------------------------------
# Mixed equilibrium on small two-path games
# ---------------------------------------------------------------------------

MIXED_MAX_USERS = 12


def _uniform_group_profile(game: Game, xs: Sequence[float]) -> MixedProfile:
    rows = []
    for gi, g in enumerate(game.groups):
        if g.n_paths == 1:
            rows.append(tuple((1.0,) for _ in range(g.n_users)))
        else:
            x = xs[gi]
            rows.append(tuple((x, 1.0 - x) for _ in range(g.n_users)))
    return MixedProfile(tuple(rows))


def solve_mixed_ne_small(game: Game, config: SolverConfig = SolverConfig()) -> EquilibriumResult:
    """Mixed equilibrium for games where every group has at most two paths.

    Searches profiles that give all users of a group the same probability x
    of taking the group's first path.  The gap between the two paths'
    expected costs is nondecreasing in x (arcs shared by both paths cancel),
    so each group is settled by bisection given the others, and groups are
    swept Gauss-Seidel style.  Expectations are exact convolutions, so the
    returned residual is limited only by the bisection width.
    """
    t0 = time.perf_counter()
    for g in game.groups:
        if g.n_paths > 2:
            raise ValueError(f"group {g.gid!r} has {g.n_paths} paths; solver handles <= 2")
    if game.n_users > MIXED_MAX_USERS:
        raise ValueError(f"{game.n_users} users exceed the exact-expectation cap {MIXED_MAX_USERS}")

    xs = [1.0 if g.n_paths == 1 else 0.5 for g in game.groups]

    def user_arc_probs(aid: str, skip_gi: int, trial: Sequence[float]):
        for gj, g in enumerate(game.groups):
            if gj == skip_gi:
                continue
            touching = [pi for pi in range(g.n_paths) if aid in g.paths[pi]]
            if not touching:
                continue
            if g.n_paths == 1:
                q = 1.0
            else:
                q = sum((trial[gj] if pi == 0 else 1.0 - trial[gj]) for pi in touching)
            for d in g.demands:
                yield d, q

    def gap(gi: int, x: float) -> float:
        # Expected cost difference between the group's two paths; arcs on
        # both paths cancel, so only the symmetric difference matters.
        g = game.groups[gi]
        arcs0 = set(g.paths[0]) - set(g.paths[1])
        arcs1 = set(g.paths[1]) - set(g.paths[0])
        total = 0.0
        for sign, arcs in ((1.0, arcs0), (-1.0, arcs1)):
            for aid in arcs:
                q_own = x if aid in arcs0 else 1.0 - x
                dist = {0.0: 1.0}
                contributions = list(user_arc_probs(aid, gi, xs))
                contributions.extend((d, q_own) for d in g.demands)
                for d, q in contributions:
                    if q == 0.0:
                        continue
                    new: dict = {}
                    for v, p in dist.items():
                        if q < 1.0:
                            new[v] = new.get(v, 0.0) + p * (1.0 - q)
                        nv = v + float(d)
                        new[nv] = new.get(nv, 0.0) + p * q
                    dist = new
                poly = game.arcs[aid]
                total += sign * sum(p * float(poly.value(v)) for v, p in dist.items())
        return total

    sweeps = 0
    max_sweeps = min(200, max(1, config.max_iterations))
    while sweeps < max_sweeps:
        sweeps += 1
        delta = 0.0
        for gi, g in enumerate(game.groups):
            if g.n_paths == 1:
                continue
            g0, g1 = gap(gi, 0.0), gap(gi, 1.0)
            if g0 == 0.0 and g1 == 0.0:
                new_x = 0.5  # total indifference: report the uniform profile
            elif g0 >= 0.0:
                new_x = 0.0
            elif g1 <= 0.0:
                new_x = 1.0
            else:
                lo, hi = 0.0, 1.0
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    if gap(gi, mid) <= 0.0:
                        lo = mid
                    else:
                        hi = mid
                new_x = 0.5 * (lo + hi)
            delta = max(delta, abs(new_x - xs[gi]))
            xs[gi] = new_x
        if delta <= 1e-15:
            break

    profile = _uniform_group_profile(game, xs)
    residual = mixed_ne_residual(game, profile)
    path_costs = expected_path_costs(game, profile)
    min_cost = min(float(c) for c in path_costs.values())
    converged = residual <= config.tolerance * (1.0 + abs(min_cost))
    cost = expected_total_cost(game, profile)
    return EquilibriumResult(flow=profile, kind="mixed-ne", residual=residual,
                             iterations=sweeps, exact=False, converged=converged,
                             cost=float(cost),
                             note="" if converged else "no equilibrium profile found within budget",
                             wall_time=time.perf_counter() - t0)
