"""The four inefficiency ratios and random-cost sampling.

Atomic, non-atomic, and mixed ratios divide worst-case equilibrium cost by
the matching optimum cost.  The random ratio is the distribution of the
realized total cost of a mixed profile over the atomic optimum cost; it is
sampled with a counter-based generator (sample i is a pure function of the
seed and i, so sharded runs reproduce exactly) and, on small games, also
computed exactly by state enumeration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .game import Game, MixedProfile, Number
from .solvers import (
    BudgetExceededError,
    SolverConfig,
    best_response_atomic,
    enumerate_atomic_equilibria,
    expected_path_costs,
    expected_total_cost,
    mixed_ne_residual,
    solve_atomic_so,
    solve_mixed_ne_small,
    solve_nonatomic_ne,
    solve_nonatomic_so,
)

POA_FLOOR_TOL = 1e-9


@dataclass(frozen=True)
class SamplingPlan:
    n_samples: int = 100_000
    rng_seed: int = 0
    worker_count: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")


@dataclass
class PoaReport:
    atomic_poa: Optional[Number]
    nonatomic_poa: Optional[float]
    mixed_poa: Optional[float]
    atomic_so_cost: Optional[Number]
    nonatomic_so_cost: Optional[float]
    atomic_status: str = "ok"
    mixed_status: str = "ok"
    mixed_certified: bool = False
    random_poa_samples: list = field(default_factory=list)  # (value, weight, source)

    def validate(self) -> None:
        for name, value in (("atomic", self.atomic_poa), ("nonatomic", self.nonatomic_poa),
                            ("mixed", self.mixed_poa)):
            if value is not None and float(value) < 1 - POA_FLOOR_TOL:
                raise ValueError(f"{name} ratio {float(value)} below 1")
        if self.atomic_so_cost is not None and self.nonatomic_so_cost is not None:
            if float(self.atomic_so_cost) < float(self.nonatomic_so_cost) - POA_FLOOR_TOL:
                raise ValueError("atomic optimum cheaper than non-atomic optimum")


def atomic_poa(game: Game, config: SolverConfig = SolverConfig()):
    """Worst pure-equilibrium cost over the atomic optimum cost.

    Exact (Fraction) when the game data is rational.  Returns
    ``(value, status)`` with value None when no pure equilibrium exists.
    """
    equilibria = enumerate_atomic_equilibria(game, config)
    if equilibria.worst is None:
        return None, "no atomic equilibrium (weighted game)"
    so = solve_atomic_so(game, config)
    value = equilibria.worst.cost / so.cost
    return value, "ok"


def nonatomic_poa(game: Game, config: SolverConfig = SolverConfig()) -> float:
    """Equilibrium cost over optimum cost for arbitrarily splittable demand."""
    ne = solve_nonatomic_ne(game, config)
    so = solve_nonatomic_so(game, config)
    if not (ne.converged and so.converged):
        raise RuntimeError("non-atomic solver did not converge within budget")
    return float(ne.cost) / float(so.cost)


def _two_user_two_path_worst(game: Game, config: SolverConfig) -> Optional[float]:
    """Certified worst expected cost over all mixed equilibria (2 users, 2 paths).

    With two users the equilibrium set is the indifference curve
    E[cost path0](x, y) = E[cost path1](x, y) plus any pure profiles that
    satisfy the used-path predicate; the expected total cost is maximized by
    a scan over x with y solved by bisection (the gap is monotone in y).
    """
    if len(game.groups) != 1:
        return None
    g = game.groups[0]
    if g.n_users != 2 or g.n_paths != 2:
        return None

    def profile_at(x: float, y: float) -> MixedProfile:
        return MixedProfile((((x, 1.0 - x), (y, 1.0 - y)),))

    def gap(x: float, y: float) -> float:
        costs = expected_path_costs(game, profile_at(x, y))
        return float(costs[(0, 0)] - costs[(0, 1)])

    def cost_at(x: float, y: float) -> float:
        return float(expected_total_cost(game, profile_at(x, y)))

    def solve_y(x: float) -> Optional[float]:
        if gap(x, 0.0) > 0.0 or gap(x, 1.0) < 0.0:
            return None
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if gap(x, mid) <= 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def curve_cost(x: float) -> Optional[float]:
        y = solve_y(x)
        return None if y is None else cost_at(x, y)

    best = None
    if gap(0.0, 0.0) >= 0.0:
        best = cost_at(0.0, 0.0)
    if gap(1.0, 1.0) <= 0.0:
        c = cost_at(1.0, 1.0)
        best = c if best is None else max(best, c)

    steps = 400
    grid = [(i / steps, curve_cost(i / steps)) for i in range(steps + 1)]
    on_curve = [(x, c) for x, c in grid if c is not None]
    if on_curve:
        x_star, c_star = max(on_curve, key=lambda t: t[1])
        lo = max(0.0, x_star - 2.0 / steps)
        hi = min(1.0, x_star + 2.0 / steps)
        for _ in range(100):  # ternary refinement of the curve maximum
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            c1, c2 = curve_cost(m1), curve_cost(m2)
            if c1 is None:
                lo = m1
            elif c2 is None:
                hi = m2
            elif c1 < c2:
                lo = m1
            else:
                hi = m2
        refined = curve_cost(0.5 * (lo + hi))
        for c in (c_star, refined):
            if c is not None and (best is None or c > best):
                best = c
    return best


def mixed_poa_small(game: Game, config: SolverConfig = SolverConfig()):
    """Worst discovered mixed-equilibrium expected cost over the atomic optimum.

    Certified only when the equilibrium set can be swept exhaustively (one
    group, two users, two paths); otherwise a lower bound from the profiles
    the solver finds, including pure equilibria that satisfy the mixed
    predicate.  Returns ``(value, certified, status)``.
    """
    so = solve_atomic_so(game, config)
    so_cost = float(so.cost)

    candidates = []
    certified = False
    swept = _two_user_two_path_worst(game, config)
    if swept is not None:
        candidates.append(swept)
        certified = True
    else:
        result = solve_mixed_ne_small(game, config)
        if result.converged:
            candidates.append(float(result.cost))
        try:
            equilibria = enumerate_atomic_equilibria(game, config)
            for entry in equilibria.equilibria:
                profile = entry.flow.as_mixed(game)
                if mixed_ne_residual(game, profile) <= config.tolerance:
                    candidates.append(float(expected_total_cost(game, profile)))
        except BudgetExceededError:
            pass

    if not candidates:
        return None, False, "no mixed equilibrium found (solver failure)"
    return max(candidates) / so_cost, certified, "ok"


# ---------------------------------------------------------------------------
# Random ratio sampling
# ---------------------------------------------------------------------------

@dataclass
class RandomPoaDistribution:
    """Empirical and, when available, exact distribution of the random ratio."""

    samples: np.ndarray  # empirical ratio per sample
    exact: list  # (ratio, probability) pairs; empty when not enumerated
    so_cost: float
    seed: int

    @property
    def empirical_mean(self) -> float:
        return float(self.samples.mean())

    @property
    def empirical_std(self) -> float:
        return float(self.samples.std(ddof=1)) if len(self.samples) > 1 else 0.0

    @property
    def exact_mean(self) -> Optional[float]:
        if not self.exact:
            return None
        return float(sum(v * p for v, p in self.exact))

    def table(self) -> list:
        """Rows (value, probability-or-frequency, source) for CSV export."""
        rows = [(float(v), float(p), "exact") for v, p in self.exact]
        values, counts = np.unique(self.samples, return_counts=True)
        rows.extend((float(v), int(c), "monte-carlo") for v, c in zip(values, counts))
        return rows


def _sample_total_costs(game: Game, profile: MixedProfile, plan: SamplingPlan) -> np.ndarray:
    """Vectorized realized total costs; sample i depends only on (seed, i)."""
    users = []  # (demand, cumulative probs, incidence rows per path)
    arc_index = {aid: i for i, aid in enumerate(game.arc_ids)}
    for gi, g in enumerate(game.groups):
        for ui, d in enumerate(g.demands):
            probs = np.array([float(p) for p in profile.probabilities[gi][ui]])
            cum = np.cumsum(probs)
            cum[-1] = 1.0 + 1e-12
            inc = np.zeros((g.n_paths, len(arc_index)))
            for pi, path in enumerate(g.paths):
                for aid in path:
                    inc[pi, arc_index[aid]] = 1.0
            users.append((float(d), cum, inc))

    n_users = len(users)
    coeff_rows = [np.array([float(c) for c in game.arcs[aid].coefficients])
                  for aid in game.arc_ids]

    from .game import sample_uniforms

    out = np.empty(plan.n_samples)
    shard_size = max(1, math.ceil(plan.n_samples / plan.worker_count))
    start = 0
    while start < plan.n_samples:
        count = min(shard_size, plan.n_samples - start)
        draws = sample_uniforms(plan.rng_seed, start, count, n_users)
        flows = np.zeros((count, len(arc_index)))
        for u, (d, cum, inc) in enumerate(users):
            choice = np.searchsorted(cum, draws[:, u], side="right")
            np.clip(choice, 0, inc.shape[0] - 1, out=choice)
            flows += d * inc[choice]
        total = np.zeros(count)
        for ai, coeffs in enumerate(coeff_rows):
            fa = flows[:, ai]
            total += fa * np.polyval(coeffs, fa)
        out[start:start + count] = total
        start += count
    return out


def exact_random_cost_distribution(game: Game, profile: MixedProfile,
                                   max_states: int = 2_000_000) -> list:
    """Exact distribution of the realized total cost, by state enumeration.

    Groups that share no arcs have independent realized costs, so their cost
    distributions are enumerated separately and convolved.
    """
    from .solvers import _group_components

    comp_dists = []
    for indices in _group_components(game):
        arc_ids = sorted({aid for gi in indices for path in game.groups[gi].paths for aid in path})
        users = []
        for gi in indices:
            g = game.groups[gi]
            for ui, d in enumerate(g.demands):
                users.append((gi, ui, d))
        states = {tuple(0 for _ in arc_ids): 1.0}
        for gi, ui, d in users:
            g = game.groups[gi]
            rows = profile.probabilities[gi][ui]
            new: dict = {}
            for state, p in states.items():
                for pi, q in enumerate(rows):
                    q = float(q)
                    if q == 0.0:
                        continue
                    arcs = set(g.paths[pi])
                    nxt = tuple(v + d if aid in arcs else v
                                for v, aid in zip(state, arc_ids))
                    new[nxt] = new.get(nxt, 0.0) + p * q
            states = new
            if len(states) > max_states:
                raise BudgetExceededError("state space too large for exact enumeration")
        dist: dict = {}
        for state, p in states.items():
            cost = sum(v * game.arcs[aid].value(v) for v, aid in zip(state, arc_ids))
            cost = float(cost)
            dist[cost] = dist.get(cost, 0.0) + p
        comp_dists.append(dist)

    total = {0.0: 1.0}
    for dist in comp_dists:
        new: dict = {}
        for v1, p1 in total.items():
            for v2, p2 in dist.items():
                new[v1 + v2] = new.get(v1 + v2, 0.0) + p1 * p2
        total = new
        if len(total) > max_states:
            raise BudgetExceededError("cost support too large for exact convolution")
    return sorted(total.items())


EXACT_DISTRIBUTION_MAX_USERS = 20


def sample_random_poa(game: Game, profile: MixedProfile, plan: SamplingPlan,
                      config: SolverConfig = SolverConfig()) -> RandomPoaDistribution:
    """Distribution of realized total cost over the atomic optimum cost."""
    profile.validate(game)
    so = solve_atomic_so(game, config)
    so_cost = float(so.cost)
    if so_cost <= 0:
        raise ValueError("atomic optimum cost must be positive")
    costs = _sample_total_costs(game, profile, plan)
    exact = []
    if game.n_users <= EXACT_DISTRIBUTION_MAX_USERS:
        exact = [(v / so_cost, p) for v, p in exact_random_cost_distribution(game, profile)]
    return RandomPoaDistribution(samples=costs / so_cost, exact=exact,
                                 so_cost=so_cost, seed=plan.rng_seed)


# ---------------------------------------------------------------------------
# Full report
# ---------------------------------------------------------------------------

def compute_poa_report(game: Game, config: SolverConfig = SolverConfig(),
                       plan: Optional[SamplingPlan] = None) -> PoaReport:
    """All applicable ratios for one game, with solver fallbacks recorded."""
    nonat_so = solve_nonatomic_so(game, config)
    nonat_ne = solve_nonatomic_ne(game, config)
    if not (nonat_ne.converged and nonat_so.converged):
        raise RuntimeError("non-atomic solver did not converge within budget")
    rho_nat = float(nonat_ne.cost) / float(nonat_so.cost)

    atomic_value = None
    atomic_so_cost = None
    atomic_status = "ok"
    try:
        equilibria = enumerate_atomic_equilibria(game, config)
        so = solve_atomic_so(game, config)
        atomic_so_cost = so.cost
        if equilibria.worst is None:
            atomic_status = "unavailable: no atomic equilibrium (weighted game)"
        else:
            atomic_value = equilibria.worst.cost / so.cost
    except BudgetExceededError:
        br = best_response_atomic(game, config)
        atomic_status = ("unavailable: enumeration budget exceeded; best-response "
                         f"cost {float(br.cost):.6g} is a lower-bound witness")

    mixed_value = None
    mixed_certified = False
    mixed_status = "ok"
    samples: list = []
    small = all(g.n_paths <= 2 for g in game.groups) and game.n_users <= 12
    if atomic_so_cost is not None and small:
        mixed_value, mixed_certified, mixed_status = mixed_poa_small(game, config)
    else:
        mixed_status = "unavailable: game outside small-solver scope"
    if plan is not None and small:
        ne = solve_mixed_ne_small(game, config)
        if ne.converged:
            samples = sample_random_poa(game, ne.flow, plan, config).table()

    report = PoaReport(
        atomic_poa=atomic_value,
        nonatomic_poa=rho_nat,
        mixed_poa=mixed_value,
        atomic_so_cost=atomic_so_cost,
        nonatomic_so_cost=float(nonat_so.cost),
        atomic_status=atomic_status,
        mixed_status=mixed_status,
        mixed_certified=mixed_certified,
        random_poa_samples=samples,
    )
    report.validate()
    return report
