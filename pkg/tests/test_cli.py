import json

import pytest

from pathfinder.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def cli(wd, *args):
    return main(["--workdir", str(wd), *map(str, args)])


def snapshot(wd):
    return {p.relative_to(wd).as_posix(): p.read_bytes() for p in sorted(wd.rglob("*")) if p.is_file()}


def pipeline(wd):
    assert cli(wd, "generate", "--nodes", 300, "--m", 8, "--C", 0.1, "--rng", 42) == EXIT_OK
    assert cli(wd, "simulate", "--beta", 0.3, "--seed-node", 0, "--rng", 7) == EXIT_OK
    assert cli(wd, "identify") == EXIT_OK
    for m in ("arr", "eff"):
        assert cli(wd, "baseline", "--method", m) == EXIT_OK
    assert cli(wd, "baseline", "--method", "mcml", "--runs", 2) == EXIT_OK
    assert cli(wd, "evaluate", "--realizations", 2, "--mcml-runs", 2, "--rng", 3) == EXIT_OK
    assert cli(wd, "report") == EXIT_OK


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    wd = tmp_path_factory.mktemp("run")
    pipeline(wd)
    return wd


def test_pipeline_writes_artifacts_with_manifests(workdir):
    for step, files in {
        "generate": ["network.txt"],
        "simulate": ["surveillance.csv", "truth.csv"],
        "identify": ["tree.csv", "report.json", "cases.jsonl"],
        "baseline-arr": ["tree.csv"],
        "baseline-mcml": ["tree.csv"],
        "evaluate": ["aggregate.json", "realizations.csv", "per_class.csv", "wrong_cases.csv"],
        "report": ["summary.json"],
    }.items():
        man = json.loads((workdir / step / "manifest.json").read_text())
        assert sorted(man["outputs"]) == sorted(files)
        for f in files:
            assert (workdir / step / f).is_file()
    man = json.loads((workdir / "generate" / "manifest.json").read_text())
    assert man["seed"] == 42 and man["config"]["nodes"] == 300
    agg = json.loads((workdir / "evaluate" / "aggregate.json").read_text())
    assert set(agg["methods"]) == {"ipi", "arr", "eff", "mcml"}


def test_rerun_is_byte_identical(workdir):
    before = snapshot(workdir)
    pipeline(workdir)
    assert snapshot(workdir) == before


def test_usage_errors(tmp_path, capsys):
    assert cli(tmp_path, "simulate") == EXIT_USAGE          # no network yet
    assert cli(tmp_path, "generate", "--bogus", 1) == EXIT_USAGE
    assert cli(tmp_path, "baseline") == EXIT_USAGE          # --method is required
    assert cli(tmp_path, "generate", "--nodes", 4, "--m", 8) == EXIT_USAGE
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "generate").exists()


def test_data_inconsistency_exit_code(tmp_path, capsys):
    net = tmp_path / "net.txt"
    net.write_text("nodes 3\nnode 0 10\nnode 1 10\nnode 2 10\nedge 0 1 0.1 both\n")
    surv = tmp_path / "s.csv"
    # node 2 has no neighbours but becomes infected
    surv.write_text("t,node,I\n0,0,1\n0,1,0\n0,2,0\n1,2,1\n1,0,1\n")
    assert cli(tmp_path, "identify", "--network", net, "--surveillance", surv) == EXIT_DATA
    assert "node 2" in capsys.readouterr().err


def test_invalid_network_is_data_inconsistency(tmp_path):
    net = tmp_path / "net.txt"
    net.write_text("nodes 2\nnode 0 10\nnode 1 10\nedge 0 1 0.7\nedge 0 1 0.4\n")
    assert cli(tmp_path, "simulate", "--network", net) == EXIT_DATA


def test_config_file_and_environment_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"rng": 1, "generate": {"nodes": 60, "m": 2, "rng": 5}}))
    assert main(["--workdir", str(tmp_path), "--config", str(cfg), "generate"]) == EXIT_OK
    man = json.loads((tmp_path / "generate" / "manifest.json").read_text())
    assert man["config"]["nodes"] == 60 and man["seed"] == 5   # section beats top level
    monkeypatch.setenv("PATHFINDER_RNG", "9")
    assert main(["--workdir", str(tmp_path), "--config", str(cfg), "generate"]) == EXIT_OK
    assert json.loads((tmp_path / "generate" / "manifest.json").read_text())["seed"] == 9
    assert main(["--workdir", str(tmp_path), "--config", str(cfg), "generate", "--rng", "11"]) == EXIT_OK
    assert json.loads((tmp_path / "generate" / "manifest.json").read_text())["seed"] == 11
    monkeypatch.setenv("PATHFINDER_RNG", "x")
    assert main(["--workdir", str(tmp_path), "generate"]) == EXIT_USAGE


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert main(["--workdir", str(tmp_path), "--config", str(cfg), "generate"]) == EXIT_USAGE
    assert main(["--workdir", str(tmp_path), "--config", str(tmp_path / "none.json"), "generate"]) == EXIT_USAGE
