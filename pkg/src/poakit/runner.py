"""Experiment orchestration: solve, sweep, sample, reproduce, decompose.

Every run writes a JSON report plus CSV tables.  CSV content is a pure
function of (config, seed): rows carry the seed and tool version, floats
are serialized with shortest round-trip repr, and wall-times stay in the
JSON report only, so identical runs produce byte-identical CSV files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import __version__
from .bounds import (
    BoundInputs,
    atomic_ne_approximation_bound,
    atomic_poa_upper_bound,
    expected_flow_approximation,
    nonatomic_poa_upper_bound,
    random_poa_probability_bound,
)
from .decomposition import decomposition_prediction, load_family, worst_atomic_cost
from .game import Game, GameSchemaError, Group, load_game
from .poa import (
    SamplingPlan,
    compute_poa_report,
    mixed_poa_small,
    sample_random_poa,
)
from .solvers import (
    BudgetExceededError,
    SolverConfig,
    enumerate_atomic_equilibria,
    mixed_ne_residual,
    solve_atomic_so,
    solve_mixed_ne_small,
    solve_nonatomic_ne,
    solve_nonatomic_so,
)

EXIT_OK = 0
EXIT_ASSERTION = 2
EXIT_INPUT = 3
EXIT_NONCONVERGED = 4


@dataclass
class ExperimentConfig:
    mode: str  # solve | sweep | sample | reproduce | decompose
    game_path: Optional[str] = None
    family_path: Optional[str] = None
    profile_path: Optional[str] = None
    grid: Sequence[int] = ()
    n_samples: int = 100_000
    seed: int = 0
    out_dir: Optional[str] = None
    tolerance: float = 1e-9
    enumeration_budget: int = 10_000_000
    workers: int = 1

    def __post_init__(self):
        if self.grid and list(self.grid) != sorted(set(self.grid)):
            raise ValueError("grid must be strictly increasing")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tolerance=self.tolerance, rng_seed=self.seed,
                            enumeration_budget=self.enumeration_budget)

    def sampling_plan(self) -> SamplingPlan:
        return SamplingPlan(n_samples=self.n_samples, rng_seed=self.seed,
                            worker_count=self.workers)


@dataclass
class RunReport:
    config: dict
    rows: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)  # (name, passed, detail)
    wall_time: float = 0.0
    exit_code: int = EXIT_OK

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.verdicts)

    def to_document(self) -> dict:
        return {
            "config": self.config,
            "rows": self.rows,
            "verdicts": [{"name": n, "passed": ok, "detail": d} for n, ok, d in self.verdicts],
            "wall_time": self.wall_time,
            "exit_code": self.exit_code,
            "version": __version__,
        }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}" if value.denominator != 1 \
            else str(value.numerator)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_report(report: RunReport, out_dir: Optional[str]) -> None:
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_document(), indent=2, sort_keys=True, default=str) + "\n",
        encoding="utf-8")


def _bound_columns(game: Game, delta: float = 1.0 / 3.0) -> dict:
    """Closed-form bound values when the game has one common degree."""
    try:
        inputs = BoundInputs.from_game(game)
    except ValueError:
        return {"atomic_poa_bound": None, "nonatomic_poa_bound": None,
                "ne_residual_bound": None, "p_delta": None}
    eps, _ = atomic_ne_approximation_bound(inputs)
    approx = expected_flow_approximation(inputs, delta)
    return {
        "atomic_poa_bound": atomic_poa_upper_bound(inputs),
        "nonatomic_poa_bound": nonatomic_poa_upper_bound(inputs),
        "ne_residual_bound": eps,
        "p_delta": approx.p_delta,
    }


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def run_solve(config: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    report = RunReport(config={"mode": "solve", "game": config.game_path,
                               "seed": config.seed, "tolerance": config.tolerance})
    try:
        game = load_game(Path(config.game_path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        report.verdicts.append(("load", False, f"asset not found: {config.game_path}"))
        report.exit_code = EXIT_INPUT
        report.wall_time = time.perf_counter() - t0
        _write_report(report, config.out_dir)
        return report
    except GameSchemaError as exc:
        report.verdicts.append(("load", False, str(exc)))
        report.exit_code = EXIT_INPUT
        report.wall_time = time.perf_counter() - t0
        _write_report(report, config.out_dir)
        return report

    solver = config.solver_config()
    try:
        poa = compute_poa_report(game, solver)
    except RuntimeError as exc:
        report.verdicts.append(("solve", False, str(exc)))
        report.exit_code = EXIT_NONCONVERGED
        report.wall_time = time.perf_counter() - t0
        _write_report(report, config.out_dir)
        return report
    bounds = _bound_columns(game)
    solver_docs = {
        "nonatomic_ne": solve_nonatomic_ne(game, solver).to_document(game),
        "nonatomic_so": solve_nonatomic_so(game, solver).to_document(game),
    }
    if all(g.n_paths <= 2 for g in game.groups) and game.n_users <= 12:
        solver_docs["mixed_ne"] = solve_mixed_ne_small(game, solver).to_document(game)
    row = {
        "game": config.game_path,
        "total_demand": float(game.total_demand),
        "d_max": float(game.d_max),
        "atomic_poa": None if poa.atomic_poa is None else poa.atomic_poa,
        "atomic_status": poa.atomic_status,
        "nonatomic_poa": poa.nonatomic_poa,
        "mixed_poa": poa.mixed_poa,
        "mixed_status": poa.mixed_status,
        "mixed_certified": poa.mixed_certified,
        "atomic_so_cost": poa.atomic_so_cost,
        "nonatomic_so_cost": poa.nonatomic_so_cost,
        **bounds,
    }
    report.rows.append({k: (float(v) if isinstance(v, Fraction) else v) for k, v in row.items()})
    report.rows.append({"solvers": solver_docs})
    report.verdicts.append(("solved", True, ""))
    if config.out_dir:
        header = ["game", "total_demand", "d_max", "atomic_poa", "nonatomic_poa", "mixed_poa",
                  "atomic_poa_bound", "nonatomic_poa_bound", "ne_residual_bound", "p_delta",
                  "seed", "version"]
        write_csv(Path(config.out_dir) / "solve.csv", header, [[
            row["game"], row["total_demand"], row["d_max"], row["atomic_poa"],
            row["nonatomic_poa"], row["mixed_poa"], row["atomic_poa_bound"],
            row["nonatomic_poa_bound"], row["ne_residual_bound"], row["p_delta"],
            config.seed, __version__]])
    report.wall_time = time.perf_counter() - t0
    _write_report(report, config.out_dir)
    return report


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def run_sweep(config: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    report = RunReport(config={"mode": "sweep", "family": config.family_path,
                               "grid": list(config.grid), "seed": config.seed})
    try:
        family = load_family(Path(config.family_path).read_text(encoding="utf-8"))
    except (FileNotFoundError, GameSchemaError, ValueError) as exc:
        report.verdicts.append(("load", False, str(exc)))
        report.exit_code = EXIT_INPUT
        report.wall_time = time.perf_counter() - t0
        _write_report(report, config.out_dir)
        return report
    if not config.grid:
        report.verdicts.append(("grid", False, "sweep needs a nonempty increasing grid"))
        report.exit_code = EXIT_INPUT
        return report

    solver = config.solver_config()
    csv_rows = []
    measured = []
    bounds_seq = []
    ratios = []
    totals = []
    for n in config.grid:
        game = family.instantiate(n)
        worst, is_lb = worst_atomic_cost(game, solver)
        so = solve_atomic_so(game, solver)
        poa = None if worst is None else worst / float(so.cost)
        cols = _bound_columns(game)
        t = float(game.total_demand)
        d = float(game.d_max)
        measured.append(poa)
        bounds_seq.append(cols["atomic_poa_bound"])
        ratios.append(d / t)
        totals.append(t)
        csv_rows.append([n, t, d, poa, cols["atomic_poa_bound"], cols["nonatomic_poa_bound"],
                         cols["ne_residual_bound"], cols["p_delta"], is_lb,
                         config.seed, __version__])
        report.rows.append({"n": n, "T": t, "d_max": d, "poa_measured": poa,
                            **cols, "atomic_lower_bound_only": is_lb})

    # Decay toward 1 is only promised when the total demand grows while the
    # top user share shrinks; families violating either side are reported
    # without the assertion (they demonstrate non-convergence).
    decaying = ratios[-1] < ratios[0] - 1e-15 and totals[-1] > totals[0] + 1e-15
    if decaying:
        ok_bound = all(b2 <= b1 + 1e-12 for b1, b2 in zip(bounds_seq, bounds_seq[1:])
                       if b1 is not None and b2 is not None)
        defined = [m for m in measured if m is not None]
        ok_measured = len(defined) >= 2 and defined[-1] <= defined[0] + 1e-12
        report.verdicts.append(("bound-decay", ok_bound,
                                f"bounds along grid: {bounds_seq}"))
        report.verdicts.append(("poa-decay", ok_measured,
                                f"measured along grid: {measured}"))
        if not (ok_bound and ok_measured):
            report.exit_code = EXIT_ASSERTION
    else:
        report.verdicts.append(("decay", True,
                                "d_max/T not decaying along grid; decay not asserted"))

    if config.out_dir:
        header = ["n", "T", "d_max", "poa_measured", "atomic_poa_bound",
                  "nonatomic_poa_bound", "ne_residual_bound", "p_delta",
                  "atomic_lower_bound_only", "seed", "version"]
        write_csv(Path(config.out_dir) / "sweep.csv", header, csv_rows)
    report.wall_time = time.perf_counter() - t0
    _write_report(report, config.out_dir)
    return report


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------

def run_sample(config: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    report = RunReport(config={"mode": "sample", "game": config.game_path,
                               "profile": config.profile_path, "seed": config.seed,
                               "n_samples": config.n_samples})
    try:
        game = load_game(Path(config.game_path).read_text(encoding="utf-8"))
    except (FileNotFoundError, GameSchemaError) as exc:
        report.verdicts.append(("load", False, str(exc)))
        report.exit_code = EXIT_INPUT
        report.wall_time = time.perf_counter() - t0
        _write_report(report, config.out_dir)
        return report

    solver = config.solver_config()
    try:
        if config.profile_path:
            from .game import MixedProfile
            doc = json.loads(Path(config.profile_path).read_text(encoding="utf-8"))
            profile = MixedProfile(tuple(tuple(tuple(row) for row in rows) for rows in doc))
            profile.validate(game)
        else:
            result = solve_mixed_ne_small(game, solver)
            if not result.converged:
                report.verdicts.append(("mixed-ne", False, result.note))
                report.exit_code = EXIT_NONCONVERGED
                report.wall_time = time.perf_counter() - t0
                _write_report(report, config.out_dir)
                return report
            profile = result.flow
    except ValueError as exc:
        report.verdicts.append(("profile", False, str(exc)))
        report.exit_code = EXIT_INPUT
        report.wall_time = time.perf_counter() - t0
        _write_report(report, config.out_dir)
        return report

    try:
        dist = sample_random_poa(game, profile, config.sampling_plan(), solver)
    except BudgetExceededError as exc:
        report.verdicts.append(("sample", False, str(exc)))
        report.exit_code = EXIT_INPUT
        report.wall_time = time.perf_counter() - t0
        _write_report(report, config.out_dir)
        return report

    delta = 1.0 / 3.0
    nonat_ne = solve_nonatomic_ne(game, solver)
    nonat_so = solve_nonatomic_so(game, solver)
    bound = random_poa_probability_bound(game, delta, float(nonat_ne.cost) / float(nonat_so.cost),
                                         float(nonat_so.cost))
    exceed = float((dist.samples > bound.threshold).mean())
    n = len(dist.samples)
    slack = 3.0 * math.sqrt(max(bound.p_delta * (1 - bound.p_delta), 1e-12) / n)
    ok = exceed <= bound.p_delta + slack
    report.rows.append({
        "empirical_mean": dist.empirical_mean,
        "exact_mean": dist.exact_mean,
        "threshold": bound.threshold,
        "p_delta": bound.p_delta,
        "exceedance_frequency": exceed,
    })
    report.verdicts.append(("random-poa-probability", ok,
                            f"frequency {exceed} vs ceiling {bound.p_delta}"))
    if not ok:
        report.exit_code = EXIT_ASSERTION

    if config.out_dir:
        header = ["value", "probability_or_frequency", "source", "seed", "version"]
        rows = [[v, p, src, config.seed, __version__] for v, p, src in dist.table()]
        write_csv(Path(config.out_dir) / "distribution.csv", header, rows)
    report.wall_time = time.perf_counter() - t0
    _write_report(report, config.out_dir)
    return report


# ---------------------------------------------------------------------------
# decompose
# ---------------------------------------------------------------------------

def run_decompose(config: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    report = RunReport(config={"mode": "decompose", "family": config.family_path,
                               "grid": list(config.grid), "seed": config.seed})
    try:
        family = load_family(Path(config.family_path).read_text(encoding="utf-8"))
        result = decomposition_prediction(family, list(config.grid), config.solver_config())
    except (FileNotFoundError, GameSchemaError, ValueError) as exc:
        report.verdicts.append(("decompose", False, str(exc)))
        report.exit_code = EXIT_INPUT
        report.wall_time = time.perf_counter() - t0
        _write_report(report, config.out_dir)
        return report

    csv_rows = []
    for row in result.rows:
        csv_rows.append([row.n, row.total_demand,
                         ";".join(repr(c) for c in row.class_costs),
                         row.predicted, row.measured_atomic, row.measured_nonatomic,
                         row.atomic_ratio, row.nonatomic_ratio,
                         row.atomic_is_lower_bound, config.seed, __version__])
        report.rows.append({
            "n": row.n, "T": row.total_demand, "predicted": row.predicted,
            "measured_atomic": row.measured_atomic,
            "measured_nonatomic": row.measured_nonatomic,
            "atomic_ratio": row.atomic_ratio, "nonatomic_ratio": row.nonatomic_ratio,
        })
    drift = [abs(r.nonatomic_ratio - 1.0) for r in result.rows]
    ok = len(drift) < 2 or drift[-1] <= drift[0] + 1e-12
    report.verdicts.append(("nonatomic-ratio-drift", ok, f"|ratio-1| along grid: {drift}"))
    if not ok:
        report.exit_code = EXIT_ASSERTION
    if config.out_dir:
        header = ["n", "T", "class_costs", "predicted", "measured_atomic",
                  "measured_nonatomic", "atomic_ratio", "nonatomic_ratio",
                  "atomic_lower_bound_only", "seed", "version"]
        write_csv(Path(config.out_dir) / "decompose.csv", header, csv_rows)
    report.wall_time = time.perf_counter() - t0
    _write_report(report, config.out_dir)
    return report


# ---------------------------------------------------------------------------
# reproduce
# ---------------------------------------------------------------------------

def asset_path(name: str) -> Path:
    return Path(__file__).parent / "assets" / name


def load_asset(name: str) -> Game:
    path = asset_path(name)
    if not path.exists():
        raise FileNotFoundError(f"asset not found: {path}")
    return load_game(path.read_text(encoding="utf-8"))


def _with_uniform_users(game: Game, per_group_users: int, demand) -> Game:
    groups = [Group(g.gid, g.paths, tuple([demand] * per_group_users)) for g in game.groups]
    return Game(game.arcs, groups)


def _sqrt_exact(n: int):
    root = math.isqrt(n)
    return Fraction(root) if root * root == n else math.sqrt(n)


def reproduce_checks(config: ExperimentConfig) -> list:
    """The bundled example games, each checked against its frozen values."""
    solver = config.solver_config()
    checks = []

    def run(name: str, fn: Callable[[], str]):
        try:
            detail = fn()
            checks.append((name, True, detail))
        except FileNotFoundError as exc:
            checks.append((name, False, str(exc)))
        except AssertionError as exc:
            checks.append((name, False, str(exc)))

    def quadratic_constant():
        game = load_asset("parallel_quadratic_constant.json")
        ne = solve_nonatomic_ne(game, solver)
        f_u = float(ne.flow.values()[0])
        assert abs(f_u - math.sqrt(2)) <= 1e-7, \
            f"expected splittable equilibrium flow sqrt(2) on the quadratic arc, got {f_u}"
        so = solve_nonatomic_so(game, solver)
        rho_nat = float(ne.cost) / float(so.cost)
        want = 18.0 / (18.0 - math.sqrt(6.0))
        assert abs(rho_nat - want) <= 1e-6, f"expected ratio {want}, got {rho_nat}"
        eq = enumerate_atomic_equilibria(game, solver)
        assert len(eq.equilibria) == 1, f"expected a unique pure equilibrium, got {len(eq.equilibria)}"
        flow = eq.worst.flow.induced_flow(game)
        assert flow.values() == (Fraction(0), Fraction(4)), \
            f"expected pure equilibrium flow (0, 4), got {flow.values()}"
        so_at = solve_atomic_so(game, solver)
        assert eq.worst.cost / so_at.cost == 1, "expected atomic ratio exactly 1"
        mixed = solve_mixed_ne_small(game, solver)
        x = float(mixed.flow.probabilities[0][0][0])
        want_x = (math.sqrt(2.0) - 1.0) / 2.0
        assert abs(x - want_x) <= 1e-8, f"expected symmetric probability {want_x}, got {x}"
        residual = mixed_ne_residual(game, mixed.flow)
        assert residual <= 1e-9, f"indifference residual {residual} above 1e-9"
        value, certified, _ = mixed_poa_small(game, solver)
        want_mixed = 5.0 - 2.5 * math.sqrt(2.0)
        assert certified, "expected a certified sweep of the equilibrium set"
        assert abs(value - want_mixed) <= 1e-8, f"expected mixed ratio {want_mixed}, got {value}"
        assert value >= 1.25, f"mixed ratio {value} below 5/4"
        return f"rho_nat={rho_nat:.6f}, mixed ratio={value:.6f}"

    def affine_offset():
        base = load_asset("parallel_affine_offset.json")
        details = []
        for n in (1, 2, 5):
            t1 = time.perf_counter()
            game = base if n == 1 else _with_uniform_users(base, 4 * n, Fraction(1, 4 * n))
            eq = enumerate_atomic_equilibria(game, solver)
            so = solve_atomic_so(game, solver)
            value = eq.worst.cost / so.cost
            assert value == Fraction(8, 7), \
                f"expected atomic ratio exactly 8/7 at n={n}, got {value}"
            dt = time.perf_counter() - t1
            assert dt < 1.0, f"n={n} took {dt:.3f}s, budget is 1s"
            details.append(f"n={n}: 8/7 in {dt * 1e3:.0f}ms")
        return "; ".join(details)

    def linear_double():
        base = load_asset("parallel_linear_double.json")
        details = []
        for n in (1, 2):
            game = _with_uniform_users(base, 2, Fraction(n))
            eq = enumerate_atomic_equilibria(game, solver)
            so = solve_atomic_so(game, solver)
            assert eq.worst.cost == 4 * n * n, \
                f"expected worst equilibrium cost {4 * n * n}, got {eq.worst.cost}"
            assert so.cost == 3 * n * n, f"expected optimum cost {3 * n * n}, got {so.cost}"
            value = eq.worst.cost / so.cost
            assert value == Fraction(4, 3), f"expected atomic ratio exactly 4/3, got {value}"
            details.append(f"n={n}: 4/3")
        return "; ".join(details)

    def two_commodity():
        base = load_asset("two_commodity_mixed_degree.json")
        t1 = time.perf_counter()
        values = []
        for n in (100, 1000, 10000):
            game = _with_uniform_users(base, 2, _sqrt_exact(n))
            eq = enumerate_atomic_equilibria(game, solver)
            so = solve_atomic_so(game, solver)
            values.append(float(eq.worst.cost) / float(so.cost))
        target = 16.0 / 9.0
        assert values[0] < values[1] < values[2] <= target + 1e-9, \
            f"expected the ratio to increase toward 16/9, got {values}"
        assert abs(values[-1] - target) <= 0.002, \
            f"expected atomic ratio within 0.002 of 16/9 at n=10^4, got {values[-1]}"
        dt = time.perf_counter() - t1
        assert dt < 30.0, f"grid took {dt:.1f}s, budget is 30s"
        return f"ratios {['%.6f' % v for v in values]} -> 16/9 in {dt:.2f}s"

    run("parallel_quadratic_constant", quadratic_constant)
    run("parallel_affine_offset", affine_offset)
    run("parallel_linear_double", linear_double)
    run("two_commodity_mixed_degree", two_commodity)
    return checks


def run_reproduce(config: Optional[ExperimentConfig] = None) -> RunReport:
    t0 = time.perf_counter()
    if config is None:
        config = ExperimentConfig(mode="reproduce")
    report = RunReport(config={"mode": "reproduce", "seed": config.seed})
    checks = reproduce_checks(config)
    report.verdicts.extend(checks)
    if any("asset not found" in detail for _, ok, detail in checks if not ok):
        report.exit_code = EXIT_INPUT
    elif not all(ok for _, ok, _ in checks):
        report.exit_code = EXIT_ASSERTION
    report.wall_time = time.perf_counter() - t0
    _write_report(report, config.out_dir)
    return report
