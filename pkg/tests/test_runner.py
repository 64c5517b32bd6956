"""End-to-end runs: solve, sweep, sample, reproduce, decompose, CLI."""

import json
import math
import shutil

import pytest

from poakit.cli import main
from poakit.runner import (
    EXIT_ASSERTION,
    EXIT_INPUT,
    EXIT_OK,
    ExperimentConfig,
    asset_path,
    run_decompose,
    run_reproduce,
    run_sample,
    run_solve,
    run_sweep,
)


def write_family(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


AFFINE_OFFSET_FAMILY = {
    "arcs": [{"id": "u", "coeffs": [1, 0]}, {"id": "l", "coeffs": [1, 1]}],
    "groups": [{"id": "od", "paths": [["u"], ["l"]], "users": [{"demand": 1}]}],
    "demand_laws": {"od": {"c": 1, "gamma": 0, "user_count": {"c": 4, "gamma": 1}}},
}

LINEAR_DOUBLE_FAMILY = {
    "arcs": [{"id": "u", "coeffs": [1, 0]}, {"id": "l", "coeffs": [2, 0]}],
    "groups": [{"id": "od", "paths": [["u"], ["l"]], "users": [{"demand": 1}]}],
    "demand_laws": {"od": {"c": 2, "gamma": 1, "user_count": {"c": 2, "gamma": 0}}},
}

UNIT_USER_FAMILY = {
    "arcs": [{"id": "u", "coeffs": [1, 0]}, {"id": "l", "coeffs": [2, 0]}],
    "groups": [{"id": "od", "paths": [["u"], ["l"]], "users": [{"demand": 1}]}],
    "demand_laws": {"od": {"c": 1, "gamma": 1, "user_demand": 1}},
}

# Offset keeps two equilibria alive at every scale, so the measured gap is
# strictly positive and its decay is informative rather than 0 == 0.
OFFSET_UNIT_FAMILY = {
    "arcs": [{"id": "u", "coeffs": [1, 0]}, {"id": "l", "coeffs": [1, 1]}],
    "groups": [{"id": "od", "paths": [["u"], ["l"]], "users": [{"demand": 1}]}],
    "demand_laws": {"od": {"c": 1, "gamma": 1, "user_demand": 1}},
}


class TestSolve:
    def test_quadratic_constant_report(self, tmp_path):
        game_path = str(asset_path("parallel_quadratic_constant.json"))
        config = ExperimentConfig(mode="solve", game_path=game_path,
                                  out_dir=str(tmp_path / "out"))
        report = run_solve(config)
        assert report.exit_code == EXIT_OK
        row = report.rows[0]
        assert row["atomic_poa"] == 1
        assert row["nonatomic_poa"] == pytest.approx(18 / (18 - math.sqrt(6)), abs=1e-6)
        assert row["mixed_poa"] == pytest.approx(5 - 2.5 * math.sqrt(2), abs=1e-8)
        assert (tmp_path / "out" / "solve.csv").exists()
        assert (tmp_path / "out" / "report.json").exists()

    def test_missing_game_is_input_error(self, tmp_path):
        config = ExperimentConfig(mode="solve", game_path=str(tmp_path / "nope.json"))
        assert run_solve(config).exit_code == EXIT_INPUT

    def test_schema_error_is_input_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"arcs": [], "groups": []}), encoding="utf-8")
        config = ExperimentConfig(mode="solve", game_path=str(bad))
        assert run_solve(config).exit_code == EXIT_INPUT

    def test_weighted_game_without_equilibrium_reported(self, tmp_path):
        from conftest import no_equilibrium_game
        from poakit import dump_game
        doc = dump_game(no_equilibrium_game())
        path = write_family(tmp_path, "noeq.json", doc)
        report = run_solve(ExperimentConfig(mode="solve", game_path=path))
        row = report.rows[0]
        assert row["atomic_poa"] is None
        assert "no atomic equilibrium" in row["atomic_status"]

    def test_minimal_single_path_game_all_ratios_one(self, tmp_path):
        doc = {"arcs": [{"id": "a", "coeffs": [1, 0]}],
               "groups": [{"id": "g", "paths": [["a"]], "users": [{"demand": 1}]}]}
        path = write_family(tmp_path, "one.json", doc)
        report = run_solve(ExperimentConfig(mode="solve", game_path=path))
        row = report.rows[0]
        assert row["atomic_poa"] == 1
        assert row["nonatomic_poa"] == pytest.approx(1.0, abs=1e-10)
        assert row["mixed_poa"] == pytest.approx(1.0, abs=1e-10)


class TestSweep:
    def test_fixed_total_demand_family_stays_at_eight_sevenths(self, tmp_path):
        path = write_family(tmp_path, "fam.json", AFFINE_OFFSET_FAMILY)
        config = ExperimentConfig(mode="sweep", family_path=path, grid=[1, 3, 9],
                                  out_dir=str(tmp_path / "out"))
        report = run_sweep(config)
        assert report.exit_code == EXIT_OK
        values = [row["poa_measured"] for row in report.rows]
        assert values == pytest.approx([8 / 7] * 3)
        # non-convergence is reported, never asserted away
        assert any(name == "decay" for name, _, _ in report.verdicts)

    def test_fixed_share_family_stays_at_four_thirds(self, tmp_path):
        path = write_family(tmp_path, "fam.json", LINEAR_DOUBLE_FAMILY)
        config = ExperimentConfig(mode="sweep", family_path=path, grid=[1, 2, 4])
        report = run_sweep(config)
        assert report.exit_code == EXIT_OK
        values = [row["poa_measured"] for row in report.rows]
        assert values == pytest.approx([4 / 3] * 3)

    def test_unit_user_family_decays(self, tmp_path):
        path = write_family(tmp_path, "fam.json", OFFSET_UNIT_FAMILY)
        config = ExperimentConfig(mode="sweep", family_path=path,
                                  grid=[10, 100, 1000], out_dir=str(tmp_path / "out"))
        report = run_sweep(config)
        assert report.exit_code == EXIT_OK
        gaps = [row["poa_measured"] - 1 for row in report.rows]
        assert all(g > 0 for g in gaps)
        assert gaps[1] <= gaps[0] / 2
        assert gaps[2] <= gaps[1] / 2
        bounds = [row["atomic_poa_bound"] for row in report.rows]
        assert bounds[0] > bounds[1] > bounds[2]

    def test_missing_family_is_input_error(self, tmp_path):
        config = ExperimentConfig(mode="sweep", family_path=str(tmp_path / "no.json"),
                                  grid=[1, 2])
        assert run_sweep(config).exit_code == EXIT_INPUT


class TestSample:
    def test_sample_report_and_distribution(self, tmp_path):
        game_path = str(asset_path("parallel_quadratic_constant.json"))
        config = ExperimentConfig(mode="sample", game_path=game_path, n_samples=50_000,
                                  seed=7, out_dir=str(tmp_path / "out"))
        report = run_sample(config)
        assert report.exit_code == EXIT_OK
        row = report.rows[0]
        assert row["exact_mean"] == pytest.approx(5 - 2.5 * math.sqrt(2), abs=1e-9)
        se = 1.5 / math.sqrt(50_000)
        assert abs(row["empirical_mean"] - row["exact_mean"]) <= 3 * se
        csv_text = (tmp_path / "out" / "distribution.csv").read_text(encoding="utf-8")
        assert "exact" in csv_text and "monte-carlo" in csv_text

    def test_profile_document_accepted(self, tmp_path):
        game_path = str(asset_path("parallel_quadratic_constant.json"))
        profile = [[[0.25, 0.75], [0.25, 0.75]]]
        ppath = tmp_path / "profile.json"
        ppath.write_text(json.dumps(profile), encoding="utf-8")
        config = ExperimentConfig(mode="sample", game_path=game_path,
                                  profile_path=str(ppath), n_samples=1000, seed=1)
        report = run_sample(config)
        assert report.exit_code == EXIT_OK


class TestReproduce:
    def test_full_pass(self):
        report = run_reproduce(ExperimentConfig(mode="reproduce"))
        assert report.exit_code == EXIT_OK
        assert len(report.verdicts) == 4
        assert all(ok for _, ok, _ in report.verdicts)

    def test_perturbed_asset_fails(self, tmp_path, monkeypatch):
        # Copy the assets, weaken the constant arc of the affine-offset game
        # to 0.9, and point the runner at the copies: the optimum split moves
        # and the exact-8/7 check must fail.
        assets = tmp_path / "assets"
        assets.mkdir()
        for name in ("parallel_quadratic_constant.json", "parallel_affine_offset.json",
                     "parallel_linear_double.json", "two_commodity_mixed_degree.json"):
            shutil.copy(asset_path(name), assets / name)
        doc = json.loads((assets / "parallel_affine_offset.json").read_text())
        doc["arcs"][1]["coeffs"] = [1, "9/10"]
        (assets / "parallel_affine_offset.json").write_text(json.dumps(doc))
        monkeypatch.setattr("poakit.runner.asset_path", lambda name: assets / name)
        report = run_reproduce(ExperimentConfig(mode="reproduce"))
        assert report.exit_code == EXIT_ASSERTION
        failed = {name for name, ok, _ in report.verdicts if not ok}
        assert failed == {"parallel_affine_offset"}

    def test_missing_asset_reported(self, tmp_path, monkeypatch):
        monkeypatch.setattr("poakit.runner.asset_path", lambda name: tmp_path / name)
        report = run_reproduce(ExperimentConfig(mode="reproduce"))
        assert report.exit_code == EXIT_INPUT
        assert all("asset not found" in detail for _, ok, detail in report.verdicts)


class TestDecomposeRun:
    def test_two_commodity_family_run(self, tmp_path):
        doc = {
            "arcs": [{"id": "a1", "coeffs": [1, 0]}, {"id": "a2", "coeffs": [1, 0]},
                     {"id": "b1", "coeffs": [1, 0, 0, 0]}, {"id": "b2", "coeffs": [8, 0, 0, 1]}],
            "groups": [{"id": "od1", "paths": [["a1"], ["a2"]], "users": [{"demand": 1}]},
                       {"id": "od2", "paths": [["b1"], ["b2"]], "users": [{"demand": 1}]}],
            "demand_laws": {"od1": {"c": 2, "gamma": 1, "user_demand": 1},
                            "od2": {"c": 2, "gamma": 0.5, "user_demand": 1}},
        }
        path = write_family(tmp_path, "fam.json", doc)
        config = ExperimentConfig(mode="decompose", family_path=path, grid=[100, 1000],
                                  out_dir=str(tmp_path / "out"))
        report = run_decompose(config)
        assert report.exit_code == EXIT_OK
        assert (tmp_path / "out" / "decompose.csv").exists()


class TestDeterminism:
    def test_sweep_csv_byte_identical(self, tmp_path):
        path = write_family(tmp_path, "fam.json", UNIT_USER_FAMILY)
        texts = []
        for run in ("a", "b"):
            out = tmp_path / run
            config = ExperimentConfig(mode="sweep", family_path=path, grid=[5, 25],
                                      seed=3, out_dir=str(out))
            run_sweep(config)
            texts.append((out / "sweep.csv").read_bytes())
        assert texts[0] == texts[1]

    def test_sample_csv_byte_identical_across_workers(self, tmp_path):
        game_path = str(asset_path("parallel_quadratic_constant.json"))
        texts = []
        for run, workers in (("a", 1), ("b", 6)):
            out = tmp_path / run
            config = ExperimentConfig(mode="sample", game_path=game_path,
                                      n_samples=20_000, seed=11, workers=workers,
                                      out_dir=str(out))
            run_sample(config)
            texts.append((out / "distribution.csv").read_bytes())
        assert texts[0] == texts[1]

    def test_seed_and_version_in_rows(self, tmp_path):
        path = write_family(tmp_path, "fam.json", UNIT_USER_FAMILY)
        out = tmp_path / "out"
        run_sweep(ExperimentConfig(mode="sweep", family_path=path, grid=[5], seed=9,
                                   out_dir=str(out)))
        lines = (out / "sweep.csv").read_text(encoding="utf-8").splitlines()
        header = lines[0].split(",")
        row = lines[1].split(",")
        assert row[header.index("seed")] == "9"
        assert row[header.index("version")] == "0.1.0"


class TestCli:
    def test_solve_subcommand(self, tmp_path, capsys):
        game_path = str(asset_path("parallel_linear_double.json"))
        code = main(["solve", "--game", game_path, "--out", str(tmp_path / "o")])
        assert code == EXIT_OK
        assert "PASS" in capsys.readouterr().out

    def test_reproduce_subcommand(self, capsys):
        assert main(["reproduce"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 4

    def test_input_error_exit_code(self, tmp_path):
        assert main(["solve", "--game", str(tmp_path / "missing.json")]) == EXIT_INPUT

    def test_grid_parsing(self):
        with pytest.raises(SystemExit):
            main(["sweep", "--family", "x.json", "--grid", "3,2,1"])

    def test_env_overrides(self, tmp_path, monkeypatch):
        monkeypatch.setenv("POAKIT_BUDGET", "1")
        from conftest import affine_offset_game
        from poakit import dump_game
        path = write_family(tmp_path, "g.json", dump_game(affine_offset_game(2)))
        code = main(["solve", "--game", path])
        assert code == EXIT_OK  # budget fallback keeps solve alive with statuses
