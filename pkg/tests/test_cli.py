import csv
import io
import json
import subprocess
import sys

import pytest

from mppineq.cli import EXIT_HYPOTHESIS, EXIT_USAGE, bundled_configs, load_config, main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


class TestBounds:
    def test_unit_row(self, capsys):
        code, out, _ = run(["bounds", "--x", "1", "--v2", "1"], capsys)
        assert code == 0
        values = {r["bound_name"]: round(float(r["value"]), 6) for r in csv.DictReader(io.StringIO(out))}
        assert values["pena_poisson"] == 0.735759 and values["pena_gauss"] == 0.606531

    def test_small_x(self, capsys):
        code, out, _ = run(["bounds", "--x", "0.0001", "--v2", "1"], capsys)
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert rows and all(float(r["value"]) == pytest.approx(1.0, abs=1e-3) for r in rows)

    def test_negative_x(self, capsys):
        code, _, err = run(["bounds", "--x", "-1", "--v2", "1"], capsys)
        assert code == EXIT_USAGE and err

    def test_bad_list(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["bounds", "--x", "a,b", "--v2", "1"])
        assert exc.value.code == EXIT_USAGE
        capsys.readouterr()

    def test_json_and_out(self, tmp_path, capsys):
        target = tmp_path / "b.json"
        assert main(["bounds", "--x", "1,2", "--v2", "1,4", "--format", "json", "--out", str(target)]) == 0
        data = json.loads(target.read_text())
        assert len({(r["x"], r["v2"]) for r in data}) == 4


class TestVerify:
    def test_bundled_names(self):
        names = bundled_configs()
        assert "thm21_compound_poisson" in names and "thm31_kingman" in names
        for n in names:
            assert load_config(n)["schema_version"] == 1

    def test_thm21_passes(self, capsys):
        code, out, _ = run(["verify", "--config", "thm21_compound_poisson"], capsys)
        assert code == 0
        rep = json.loads(out)
        assert rep["passed"] and rep["config"]["engine"]["seed"] == 20210

    def test_hl2_failure_exit(self, capsys):
        code, _, err = run(["verify", "--config", "hl2_failure"], capsys)
        assert code == EXIT_HYPOTHESIS and "hypothesis" in err

    def test_flipped_convention_fails(self, capsys):
        assert run(["verify", "--config", "atom_ratio_compensator"], capsys)[0] == 0
        code, out, _ = run(["verify", "--config", "atom_ratio_paper"], capsys)
        assert code == 1 and not json.loads(out)["passed"]

    def test_zero_paths(self, capsys):
        code, _, err = run(["verify", "--config", "thm21_compound_poisson", "--n-paths", "0"], capsys)
        assert code == EXIT_USAGE and err

    def test_byte_identical(self, tmp_path, capsys):
        target = tmp_path / "r.json"
        argv = ["verify", "--config", "thm24_25_compound_poisson", "--n-paths", "20000", "--seed", "5",
                "--out", str(target)]
        outs = []
        for _ in range(2):
            assert main(argv) == 0
            outs.append(target.read_bytes())
        assert outs[0] == outs[1]
        capsys.readouterr()

    def test_results_independent_of_workers(self, capsys):
        results = []
        for workers in ("1", "2"):
            code, out, _ = run(["verify", "--config", "thm24_25_compound_poisson", "--n-paths", "20000",
                                "--seed", "5", "--workers", workers], capsys)
            assert code == 0
            results.append(json.loads(out)["results"])
        assert results[0] == results[1]

    def test_csv_output(self, capsys):
        code, out, _ = run(["verify", "--config", "thm21_compound_poisson", "--n-paths", "5000", "--format", "csv"],
                           capsys)
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert rows and {"label", "p_hat", "bound_value", "verdict"} <= set(rows[0])

    def test_defaults_written(self, capsys):
        _, out, _ = run(["verify", "--config", "atom_grid_rademacher", "--n-paths", "2000"], capsys)
        eng = json.loads(out)["config"]["engine"]
        assert eng["n_paths"] == 2000 and "slack" in eng and "convention" in eng

    def test_seed_mandatory(self, tmp_path, capsys):
        cfg = load_config("thm21_compound_poisson")
        del cfg["engine"]["seed"]
        code, _, err = run(["verify", "--config", write_config(tmp_path, cfg)], capsys)
        assert code == EXIT_USAGE and "seed" in err

    def test_parse_error_location(self, tmp_path, capsys):
        p = tmp_path / "broken.json"
        p.write_text('{\n  "schema_version": 1,\n  "model": {\n    "kind": \n}\n')
        code, _, err = run(["verify", "--config", str(p)], capsys)
        assert code == EXIT_USAGE and "line" in err

    def test_unknown_field_value(self, tmp_path, capsys):
        cfg = load_config("thm21_compound_poisson")
        cfg["model"]["kind"] = "nonsense"
        code, _, err = run(["verify", "--config", write_config(tmp_path, cfg)], capsys)
        assert code == EXIT_USAGE and "kind" in err

    def test_missing_config(self, capsys):
        code, _, _ = run(["verify", "--config", "no_such_config"], capsys)
        assert code == EXIT_USAGE

    def test_env_workers(self, monkeypatch, capsys):
        monkeypatch.setenv("PENA_MPP_WORKERS", "2")
        code, out, _ = run(["verify", "--config", "atom_grid_rademacher", "--n-paths", "9000"], capsys)
        assert code == 0 and json.loads(out)["passed"]


class TestCoalescent:
    def test_kingman_small(self, tmp_path, capsys):
        traj = tmp_path / "traj.csv"
        code, out, _ = run(["coalescent", "--config", "thm31_kingman", "--n-paths", "8192",
                            "--trajectory", str(traj)], capsys)
        assert code == 0
        rep = json.loads(out)
        assert rep["passed"] and rep["min_jump"] >= 0
        assert rep["t0"] == pytest.approx(0.10258658877510096)
        assert traj.read_text().splitlines()[0] == "time,N,k,dM,M,QV,PQV"

    def test_one_block_rejected(self, tmp_path, capsys):
        cfg = load_config("thm31_kingman")
        cfg["model"]["n0"] = 1
        code, _, err = run(["coalescent", "--config", write_config(tmp_path, cfg)], capsys)
        assert code == EXIT_USAGE and err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mppineq.cli", "bounds", "--x", "1", "--v2", "1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.startswith("x,")
