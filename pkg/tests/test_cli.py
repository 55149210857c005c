import csv
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from searchmip.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def gen_instance(runner, tmp_path, **flags):
    path = tmp_path / "inst.json"
    args = ["gen", "--grid-side", "3", "--searchers", "1", "--horizon", "3", "--out", str(path)]
    for key, value in flags.items():
        args.extend([f"--{key.replace('_', '-')}", str(value)])
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    return path


class TestGen:
    def test_writes_versioned_document(self, runner, tmp_path):
        path = gen_instance(runner, tmp_path)
        doc = json.loads(path.read_text())
        assert doc["version"] == 1
        assert doc["motion"]["state_count"] == 10

    def test_even_side_fails_with_malformed_code(self, runner, tmp_path):
        result = runner.invoke(
            main, ["gen", "--grid-side", "4", "--searchers", "1", "--horizon", "3", "--out", str(tmp_path / "x.json")]
        )
        assert result.exit_code == 3


class TestSolve:
    def test_writes_all_artifacts(self, runner, tmp_path):
        inst = gen_instance(runner, tmp_path)
        outdir = tmp_path / "run"
        result = runner.invoke(
            main,
            ["solve", "--instance", str(inst), "--method", "csp-u-pre", "--gap", "1e-9",
             "--time-limit", "60", "--out", str(outdir)],
        )
        assert result.exit_code == 0, result.output
        record = json.loads((outdir / "run.json").read_text())
        assert record["method"] == "csp-u-pre"
        assert (outdir / "plan.txt").read_text().startswith("# searchmip plan")
        assert (outdir / "trace.csv").read_text()

    def test_unknown_method_exit_code(self, runner, tmp_path):
        inst = gen_instance(runner, tmp_path)
        result = runner.invoke(
            main, ["solve", "--instance", str(inst), "--method", "nope", "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2

    def test_malformed_instance_exit_code(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"version\": 7}")
        result = runner.invoke(
            main, ["solve", "--instance", str(bad), "--method", "csp-u", "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 3

    def test_budget_violation_exit_code(self, runner, tmp_path):
        inst = gen_instance(runner, tmp_path, horizon=5)
        # enumeration would blow through a one-path cap
        result = runner.invoke(
            main,
            ["paths", "--instance", str(inst), "--mode", "enumerate", "--cap", "2",
             "--out", str(tmp_path / "cond.json")],
        )
        assert result.exit_code == 4

    def test_oracle_agrees_with_milp_through_the_cli(self, runner, tmp_path):
        inst = gen_instance(runner, tmp_path)
        values = {}
        for method in ("oracle", "csp-u"):
            outdir = tmp_path / method
            result = runner.invoke(
                main,
                ["solve", "--instance", str(inst), "--method", method, "--gap", "1e-9",
                 "--time-limit", "60", "--out", str(outdir)],
            )
            assert result.exit_code == 0, result.output
            values[method] = json.loads((outdir / "run.json").read_text())["min_value"]
        assert abs(values["oracle"] - values["csp-u"]) <= 1e-6


class TestEvalAndPaths:
    def test_eval_accepts_solver_plan(self, runner, tmp_path):
        inst = gen_instance(runner, tmp_path)
        outdir = tmp_path / "run"
        runner.invoke(
            main,
            ["solve", "--instance", str(inst), "--method", "csp-l", "--gap", "1e-9",
             "--time-limit", "60", "--out", str(outdir)],
        )
        result = runner.invoke(
            main, ["eval", "--instance", str(inst), "--plan", str(outdir / "plan.txt")]
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["feasible"] is True

    def test_paths_sample_writes_conditional_instance(self, runner, tmp_path):
        inst = gen_instance(runner, tmp_path)
        out = tmp_path / "cond.json"
        result = runner.invoke(
            main,
            ["paths", "--instance", str(inst), "--mode", "sample", "--count", "9", "--seed", "2",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert len(doc["target"]["conditional"]["paths"]) == 9


class TestReproducibility:
    def test_solve_artifacts_identical_across_runs(self, runner, tmp_path):
        # bit-for-bit at one thread, apart from wall-clock timing fields
        inst = gen_instance(runner, tmp_path)
        outputs = []
        for tag in ("a", "b"):
            outdir = tmp_path / tag
            result = runner.invoke(
                main,
                ["solve", "--instance", str(inst), "--method", "sca", "--gap", "1e-6",
                 "--delta", "1e-6", "--time-limit", "120", "--seed", "9", "--out", str(outdir)],
            )
            assert result.exit_code == 0, result.output
            record = json.loads((outdir / "run.json").read_text())
            record.pop("timing")
            trace_rows = []
            with open(outdir / "trace.csv") as fh:
                for row in csv.DictReader(fh):
                    trace_rows.append({k: v for k, v in row.items() if "seconds" not in k})
            outputs.append((record, (outdir / "plan.txt").read_text(), trace_rows))
        assert outputs[0] == outputs[1]


class TestBench:
    def test_sweep_emits_rows_with_monotone_values_in_horizon(self, runner, tmp_path):
        outdir = tmp_path / "bench"
        result = runner.invoke(
            main,
            ["bench", "--grid-side", "3", "--searchers", "1", "--horizons", "2,3,4",
             "--methods", "csp-u-pre", "--gap", "1e-9", "--time-limit", "60", "--out", str(outdir)],
        )
        assert result.exit_code == 0, result.output
        with open(outdir / "bench.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        values = [float(r["min_value"]) for r in rows]
        # a longer horizon can only help the searchers
        assert values[0] >= values[1] >= values[2]
