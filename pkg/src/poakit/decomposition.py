"""Demand families and the per-class limit analysis.

A demand family grows each group's demand as c * n^gamma and fills the
group with users of a fixed granularity.  Groups whose demand grows
without bound are split into classes of equal growth rate; each class gets
a scaling exponent from its path degrees, a limit game with normalized
demands, and a limit equilibrium whose cost predicts the class's share of
the full game's equilibrium cost.  The prediction is compared with
measured costs on an n-grid; what is checked is that the ratios drift
toward 1, not equality at any finite n.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .game import CostPolynomial, Game, GameSchemaError, Group, Number, load_game
from .solvers import (
    BudgetExceededError,
    SolverConfig,
    AtomicProfile,
    best_response_atomic,
    enumerate_atomic_equilibria,
    solve_nonatomic_ne,
)

WORST_CASE_RESTARTS = 32


@dataclass(frozen=True)
class DemandLaw:
    """Per-group demand schedule d(n) = c * n^gamma plus a user granularity.

    Granularity is either a fixed user demand (the group fills with users of
    that size, remainder to one extra user, so the maximum individual demand
    stays bounded) or a user-count law (count_c * n^count_gamma equal users
    splitting d(n), so individual demands may grow or shrink with n).
    """

    c: Number
    gamma: float
    user_demand: Optional[Number] = None
    user_count: Optional[tuple] = None  # (count_c, count_gamma)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("demand coefficient c must be > 0")
        if self.gamma < 0:
            raise ValueError("growth exponent gamma must be >= 0")
        if (self.user_demand is None) == (self.user_count is None):
            raise ValueError("exactly one of user_demand / user_count is required")
        if self.user_demand is not None and not self.user_demand > 0:
            raise ValueError("user granularity must be > 0")
        if self.user_count is not None:
            cc, cg = self.user_count
            if not cc > 0 or cg < 0:
                raise ValueError("user-count law needs c > 0 and gamma >= 0")

    def demand_at(self, n: int) -> Number:
        if n < 1:
            raise ValueError("n must be >= 1")
        if float(self.gamma).is_integer():
            return self.c * Fraction(n) ** int(self.gamma)
        return float(self.c) * float(n) ** float(self.gamma)

    def count_at(self, n: int) -> int:
        cc, cg = self.user_count
        if float(cg).is_integer():
            exact = cc * Fraction(n) ** int(cg)
            return max(1, round(exact))
        return max(1, round(float(cc) * float(n) ** float(cg)))


@dataclass(frozen=True)
class DemandFamily:
    base: Game
    laws: Mapping[str, DemandLaw]

    def __post_init__(self):
        for g in self.base.groups:
            if g.gid not in self.laws:
                raise ValueError(f"missing demand law for group {g.gid!r}")

    @property
    def has_regular_group(self) -> bool:
        return any(law.gamma > 0 for law in self.laws.values())

    def users_at(self, gid: str, n: int) -> tuple:
        """User demand vector realizing d(n) under the group's granularity."""
        law = self.laws[gid]
        demand = law.demand_at(n)
        if law.user_count is not None:
            count = law.count_at(n)
            return (demand / count,) * count
        v = law.user_demand
        if demand <= v:
            return (demand,)
        count = int(demand / v)
        remainder = demand - count * v
        if isinstance(remainder, float) and remainder < 1e-9 * float(v):
            remainder = 0
        users = [v] * count
        if remainder > 0:
            users.append(remainder)
        return tuple(users)

    def instantiate(self, n: int) -> Game:
        groups = [Group(g.gid, g.paths, self.users_at(g.gid, n)) for g in self.base.groups]
        return Game(self.base.arcs, groups)


def load_family(document: Union[str, Mapping]) -> DemandFamily:
    """Family document: a game document plus a ``demand_laws`` mapping."""
    import json

    doc = json.loads(document) if isinstance(document, str) else document
    if "demand_laws" not in doc:
        raise GameSchemaError("demand_laws", "missing required key")
    base = load_game({"arcs": doc["arcs"], "groups": doc["groups"]})
    laws = {}
    for gid, law in doc["demand_laws"].items():
        from .game import _as_number
        where = f"demand_laws[{gid}]"
        for key in ("c", "gamma"):
            if key not in law:
                raise GameSchemaError(where, f"missing {key!r}")
        kwargs = {"c": _as_number(law["c"], where + ".c"), "gamma": float(law["gamma"])}
        if "user_demand" in law:
            kwargs["user_demand"] = _as_number(law["user_demand"], where + ".user_demand")
        elif "user_count" in law:
            uc = law["user_count"]
            kwargs["user_count"] = (_as_number(uc["c"], where + ".user_count.c"),
                                    float(uc["gamma"]))
        else:
            raise GameSchemaError(where, "needs 'user_demand' or 'user_count'")
        laws[gid] = DemandLaw(**kwargs)
    return DemandFamily(base=base, laws=laws)


# ---------------------------------------------------------------------------
# Classification and limit machinery
# ---------------------------------------------------------------------------

def classify_groups(family: DemandFamily):
    """Split group ids into demand-unbounded (regular) and bounded (irregular)."""
    regular = [g.gid for g in family.base.groups if family.laws[g.gid].gamma > 0]
    irregular = [g.gid for g in family.base.groups if family.laws[g.gid].gamma == 0]
    return regular, irregular


def ordered_partition(family: DemandFamily) -> list:
    """Regular groups bucketed by equal growth exponent, fastest class first."""
    regular, _ = classify_groups(family)
    by_gamma: dict = {}
    for gid in regular:
        by_gamma.setdefault(float(family.laws[gid].gamma), []).append(gid)
    return [by_gamma[g] for g in sorted(by_gamma, reverse=True)]


def scaling_exponent(game: Game, class_gids: Sequence[str]) -> int:
    """max over class groups of (min over the group's paths of max arc degree)."""
    lam = 0
    for gid in class_gids:
        g = game.groups[game.group_index(gid)]
        cheapest = min(max(game.arcs[aid].degree for aid in path) for path in g.paths)
        lam = max(lam, cheapest)
    return lam


def tight_paths(game: Game, class_gids: Sequence[str], lam: int) -> dict:
    """Per-path labels: tight when the path's largest arc degree is <= lambda.

    Every group of the class has at least one tight path whenever lambda is
    the class's scaling exponent; that is asserted rather than trusted.
    """
    labels = {}
    for gid in class_gids:
        g = game.groups[game.group_index(gid)]
        flags = tuple(max(game.arcs[aid].degree for aid in path) <= lam for path in g.paths)
        if not any(flags):
            raise ValueError(f"group {gid!r} has no tight path for exponent {lam}")
        labels[gid] = flags
    return labels


def limit_game(game: Game, class_gids: Sequence[str], lam: int,
               family: DemandFamily) -> Game:
    """Per-class limit: degree-lambda arcs keep their leading monomial,
    lower-degree arcs become free, and paths through higher-degree arcs are
    dropped.  Group demands are the class-normalized coefficients (total 1).
    """
    class_total = sum(family.laws[gid].c for gid in class_gids)
    groups = []
    used_arcs: set = set()
    for gid in class_gids:
        g = game.groups[game.group_index(gid)]
        keep = [path for path in g.paths
                if max(game.arcs[aid].degree for aid in path) <= lam]
        if not keep:
            raise ValueError(f"group {gid!r} loses all paths in the limit")
        demand = family.laws[gid].c / class_total
        groups.append(Group(g.gid, tuple(keep), (demand,)))
        for path in keep:
            used_arcs.update(path)
    arcs = {}
    for aid in game.arc_ids:
        if aid not in used_arcs:
            continue
        poly = game.arcs[aid]
        if poly.degree == lam:
            arcs[aid] = CostPolynomial((poly.coefficients[0],) + (Fraction(0),) * lam)
        else:
            arcs[aid] = CostPolynomial((Fraction(0),) * (poly.degree + 1))
    return Game(arcs, groups, allow_zero_costs=True)


def limit_ne(game: Game, config: SolverConfig = SolverConfig()):
    """Non-atomic equilibrium of a limit game and its total cost."""
    result = solve_nonatomic_ne(game, config)
    return result, float(result.cost)


# ---------------------------------------------------------------------------
# Prediction vs. measurement
# ---------------------------------------------------------------------------

@dataclass
class ClassSummary:
    gids: list
    gamma: float
    lam: int
    demand_coefficient: float  # T_u(n) = coefficient * n^gamma
    limit_cost: float
    limit_flow: dict


@dataclass
class PredictionRow:
    n: int
    total_demand: float
    predicted: float
    class_costs: list  # per class: T_u(n) * g_n * limit cost
    measured_atomic: Optional[float]
    measured_nonatomic: float
    atomic_ratio: Optional[float]
    nonatomic_ratio: float
    atomic_is_lower_bound: bool


@dataclass
class DecompositionReport:
    classes: list  # ClassSummary, fastest first
    irregular: list
    rows: list  # PredictionRow per grid point


def _random_profile(game: Game, seed: int) -> AtomicProfile:
    gen = np.random.Generator(np.random.Philox(key=seed))
    picks = []
    for g in game.groups:
        picks.append(tuple(int(x) for x in gen.integers(0, g.n_paths, size=g.n_users)))
    return AtomicProfile(tuple(picks))


def worst_atomic_cost(game: Game, config: SolverConfig):
    """Worst pure-equilibrium cost; exact when enumerable, else a best-response
    search from seeded random starts (a lower bound on the true worst case)."""
    try:
        equilibria = enumerate_atomic_equilibria(game, config)
        if equilibria.worst is None:
            return None, False
        return float(equilibria.worst.cost), False
    except BudgetExceededError:
        worst = None
        for i in range(WORST_CASE_RESTARTS):
            start = _random_profile(game, config.rng_seed + i)
            result = best_response_atomic(game, config, start)
            if result.converged and (worst is None or float(result.cost) > worst):
                worst = float(result.cost)
        return worst, True


def decomposition_prediction(family: DemandFamily, n_grid: Sequence[int],
                             config: SolverConfig = SolverConfig()) -> DecompositionReport:
    """Predicted equilibrium cost sum_u T_u(n) g_n(u) C_u versus measured costs.

    The prediction adds, per class, total demand times scaling factor times
    the limit-equilibrium cost.  Measured worst pure-equilibrium and
    non-atomic equilibrium costs of the instantiated game are reported as
    ratios against the prediction; the ratios approaching 1 along the grid
    is the property of interest.
    """
    if not family.has_regular_group:
        raise ValueError("family has no group with growing demand")
    if not n_grid or list(n_grid) != sorted(set(n_grid)):
        raise ValueError("n grid must be nonempty and strictly increasing")

    classes = []
    for gids in ordered_partition(family):
        lam = scaling_exponent(family.base, gids)
        tight_paths(family.base, gids, lam)  # asserts every group keeps a path
        lim = limit_game(family.base, gids, lam, family)
        result, cost = limit_ne(lim, config)
        classes.append(ClassSummary(
            gids=gids,
            gamma=float(family.laws[gids[0]].gamma),
            lam=lam,
            demand_coefficient=float(sum(family.laws[gid].c for gid in gids)),
            limit_cost=cost,
            limit_flow={f"{lim.groups[gi].gid}/{pi}": float(v)
                        for (gi, pi), v in result.flow.items()},
        ))
    _, irregular = classify_groups(family)

    rows = []
    for n in n_grid:
        game = family.instantiate(n)
        class_costs = []
        for cls in classes:
            t_u = cls.demand_coefficient * float(n) ** cls.gamma
            g_n = t_u ** cls.lam
            class_costs.append(t_u * g_n * cls.limit_cost)
        predicted = sum(class_costs)
        nonat = solve_nonatomic_ne(game, config)
        measured_nonatomic = float(nonat.cost)
        measured_atomic, is_lb = worst_atomic_cost(game, config)
        rows.append(PredictionRow(
            n=n,
            total_demand=float(game.total_demand),
            predicted=predicted,
            class_costs=class_costs,
            measured_atomic=measured_atomic,
            measured_nonatomic=measured_nonatomic,
            atomic_ratio=None if measured_atomic is None else measured_atomic / predicted,
            nonatomic_ratio=measured_nonatomic / predicted,
            atomic_is_lower_bound=is_lb,
        ))
    return DecompositionReport(classes=classes, irregular=irregular, rows=rows)
