"""Command-line interface tests: exit codes, schema diagnostics, CSV output."""

import json

import pytest

from secgame.cli import (EXIT_NO_CONVERGENCE, EXIT_OK, EXIT_VALIDATION,
                         EXIT_VERIFICATION, SchemaError, main, scenario_from_data,
                         scenario_to_data)
from secgame.scenarios import experiment1


@pytest.fixture()
def exp1_file(tmp_path):
    path = tmp_path / "exp1.json"
    path.write_text(json.dumps(scenario_to_data(experiment1())))
    return str(path)


def run(args):
    return main(args)


class TestSolveCommand:
    def test_builtin_solves(self, capsys):
        assert run(["solve", "exp1"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "converged: yes" in out
        assert "0.9642" in out
        assert "reconciliation" in out

    def test_scenario_file_roundtrip_and_csv(self, exp1_file, tmp_path, capsys):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        assert run(["solve", "exp1", "--out", str(out1)]) == EXIT_OK
        assert run(["solve", exp1_file, "--out", str(out2)]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()
        header = out1.read_text().splitlines()[0]
        assert header == ("u_1,u_2,Q_1_1,Q_1_2,Q_2_1,Q_2_2,lambda_1,lambda_2,"
                          "EU_1,EU_2,residual,iters,converged")

    def test_dump_resolves_and_resolves_identically(self, tmp_path, capsys):
        assert run(["solve", "exp1", "--dump"]) == EXIT_OK
        dumped = capsys.readouterr().out
        data = json.loads(dumped)
        assert data["model"]["m"] == 2
        path = tmp_path / "dumped.json"
        path.write_text(dumped)
        out1 = tmp_path / "c.csv"
        out2 = tmp_path / "d.csv"
        assert run(["solve", "exp1", "--out", str(out1)]) == EXIT_OK
        assert run(["solve", str(path), "--out", str(out2)]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()

    def test_missing_markets_names_the_path(self, tmp_path, capsys):
        data = scenario_to_data(experiment1())
        del data["model"]["markets"]
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(data))
        assert run(["solve", str(path)]) == EXIT_VALIDATION
        err = capsys.readouterr().err
        assert "model.markets" in err

    def test_unknown_key_names_the_path(self, tmp_path, capsys):
        data = scenario_to_data(experiment1())
        data["model"]["retailers"][0]["budget"] = 1.0
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(data))
        assert run(["solve", str(path)]) == EXIT_VALIDATION
        assert "model.retailers[0].budget" in capsys.readouterr().err

    def test_invalid_json_is_validation_error(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert run(["solve", str(path)]) == EXIT_VALIDATION

    def test_nonconvergence_exit_code(self, tmp_path, capsys):
        data = scenario_to_data(experiment1())
        data["solver"]["max_iter"] = 5
        path = tmp_path / "starved.json"
        path.write_text(json.dumps(data))
        assert run(["solve", str(path)]) == EXIT_NO_CONVERGENCE
        assert "converged: NO" in capsys.readouterr().out

    def test_trace_written(self, tmp_path, capsys):
        trace = tmp_path / "trace.csv"
        assert run(["solve", "exp1", "--trace", str(trace)]) == EXIT_OK
        lines = trace.read_text().splitlines()
        assert lines[0] == "iteration,residual,beta,r"
        assert len(lines) > 100

    def test_three_retailer_builtin(self, capsys):
        assert run(["solve", "exp5"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "3 retailers" in out
        assert "unreconciled" in out


class TestSweepCommand:
    def test_custom_sweep_csv(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code = run(["sweep", "--param", "D1", "--from", "150", "--to", "160",
                    "--steps", "3", "--out", str(out)])
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0].startswith("param,u_1,u_2,Q_1_1")
        assert len(lines) == 4
        assert lines[1].split(",")[0] == "150.0"
        assert all(line.endswith("true") for line in lines[1:])

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["sweep", "--param", "D1", "--from", "150", "--to", "160",
                "--steps", "3"]
        assert run(argv + ["--out", str(a)]) == EXIT_OK
        assert run(argv + ["--out", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_stdout_csv_when_no_out(self, capsys):
        code = run(["sweep", "--param", "D1", "--from", "150", "--to", "160",
                    "--steps", "2"])
        assert code == EXIT_OK
        captured = capsys.readouterr()
        assert captured.out.startswith("param,u_1")
        assert "crossing" in captured.err or "no crossing" in captured.err

    def test_shares_coupling_through_cli(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        code = run(["sweep", "--param", "t1", "--from", "0.70", "--to", "0.80",
                    "--steps", "3", "--out", str(out)])
        assert code == EXIT_OK
        assert len(out.read_text().splitlines()) == 4

    def test_builtin_market_share_sweep(self, tmp_path, capsys):
        out = tmp_path / "exp4.csv"
        assert run(["sweep", "exp4", "--out", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert len(lines) == 19  # header + 18 grid points
        printed = capsys.readouterr().out
        assert "crossing" in printed or "no crossing" in printed

    def test_threads_env_reproduces_cold_rows(self, tmp_path, monkeypatch):
        argv = ["sweep", "--param", "D1", "--from", "150", "--to", "160",
                "--steps", "3"]
        seq = tmp_path / "seq.csv"
        par = tmp_path / "par.csv"
        # threads > 1 solves each row from the scenario's own start, which is
        # exactly what warm_start=False does sequentially
        monkeypatch.setenv("SECGAME_THREADS", "2")
        assert run(argv + ["--out", str(par)]) == EXIT_OK
        monkeypatch.setenv("SECGAME_THREADS", "2")
        assert run(argv + ["--out", str(seq)]) == EXIT_OK
        assert seq.read_bytes() == par.read_bytes()

    def test_unknown_builtin_name(self, capsys):
        assert run(["sweep", "exp9"]) == EXIT_VALIDATION

    def test_missing_flags_for_custom(self, capsys):
        assert run(["sweep", "--param", "D1"]) == EXIT_VALIDATION

    def test_invalid_range(self, capsys):
        assert run(["sweep", "--param", "D1", "--from", "160", "--to", "150",
                    "--steps", "3"]) == EXIT_VALIDATION

    def test_unknown_parameter_path(self, capsys):
        assert run(["sweep", "--param", "Z1", "--from", "1", "--to", "2",
                    "--steps", "2"]) == EXIT_VALIDATION


class TestVerifyCommand:
    def test_certifies_good_solve(self, capsys):
        assert run(["verify", "exp1", "--grid", "30"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "certified" in out

    def test_sloppy_solve_fails_verification(self, tmp_path, capsys):
        data = scenario_to_data(experiment1())
        data["solver"]["tol"] = 1e-1
        path = tmp_path / "sloppy.json"
        path.write_text(json.dumps(data))
        assert run(["verify", str(path), "--grid", "50"]) == EXIT_VERIFICATION
        assert "NOT certified" in capsys.readouterr().out

    def test_single_retailer_trivial_scenario(self, tmp_path, capsys):
        data = {
            "model": {
                "m": 1, "n": 1,
                "retailers": [{"c": 4.0, "B": 2.0, "D": 0.0, "t": 0.5, "mu": 0.0,
                               "costs": [{"a": 1.0, "b": 2.0, "s": 1.0}]}],
                "markets": [{"alpha": -2.0, "gamma": 0.0, "kappa": 40.0}],
            },
        }
        path = tmp_path / "single.json"
        path.write_text(json.dumps(data))
        assert run(["verify", str(path), "--grid", "40"]) == EXIT_OK


class TestGradcheckCommand:
    def test_default_variant_passes(self, capsys):
        assert run(["gradcheck", "exp1", "--points", "25"]) == EXIT_OK
        assert "PASS" in capsys.readouterr().out

    def test_literal_variant_fails(self, capsys):
        assert run(["gradcheck", "exp1", "--points", "25",
                    "--variant", "literal-eq13"]) == EXIT_VERIFICATION
        assert "FAIL" in capsys.readouterr().out

    def test_zero_points_is_usage_error(self, capsys):
        assert run(["gradcheck", "exp1", "--points", "0"]) == EXIT_VALIDATION


class TestSchemaHelpers:
    def test_unknown_top_level_key(self):
        data = scenario_to_data(experiment1())
        data["extra"] = {}
        with pytest.raises(SchemaError) as err:
            scenario_from_data(data)
        assert "extra" in str(err.value)

    def test_wrong_type_reported_with_path(self):
        data = scenario_to_data(experiment1())
        data["model"]["retailers"][1]["B"] = "much"
        with pytest.raises(SchemaError) as err:
            scenario_from_data(data)
        assert "model.retailers[1].B" in str(err.value)

    def test_invariant_violation_reported_with_path(self):
        data = scenario_to_data(experiment1())
        data["model"]["markets"][0]["alpha"] = 2.0
        with pytest.raises(SchemaError) as err:
            scenario_from_data(data)
        assert "model.markets[0]" in str(err.value)

    def test_defaults_applied_when_sections_missing(self):
        data = scenario_to_data(experiment1())
        del data["initial"]
        del data["solver"]
        scen = scenario_from_data(data)
        assert scen.config.tol == 1e-7
        assert scen.x0.Q[0, 0] == 1.0


class TestUsageErrors:
    def test_unknown_subcommand(self):
        assert run(["frobnicate"]) == EXIT_VALIDATION

    def test_missing_scenario_argument(self):
        assert run(["solve"]) == EXIT_VALIDATION
