import json
from importlib import resources

import pytest

from chembw import cli

DATA = resources.files("chembw") / "data"


def run(tmp_path, *args, name="minimal.json"):
    return cli.main([*args, "-i", str(DATA / name), "-o", str(tmp_path)])


def manifest(tmp_path, command):
    return json.loads((tmp_path / f"manifest_{command}.json").read_text())


def test_train(tmp_path, capsys):
    assert run(tmp_path, "train", name="example1.json") == cli.EXIT_OK
    assert "theta:" in capsys.readouterr().out
    doc = json.loads((tmp_path / "train_summary.json").read_text())
    assert doc["converged"] and abs(doc["theta"][0][0] - 0.5071) < 1e-2
    assert (tmp_path / "train_trace.csv").read_text().startswith("iteration,log_likelihood\n")


def test_train_nonconverged(tmp_path):
    assert run(tmp_path, "train", "--max-iters", "2", name="example1.json") == cli.EXIT_NONCONVERGED
    assert manifest(tmp_path, "train")["status"] == "nonconverged"


def test_compile_counts(tmp_path, capsys):
    assert run(tmp_path, "compile", name="example1.json") == cli.EXIT_OK
    assert capsys.readouterr().out.startswith("306 species, 922 reactions, 150 petals, 102 flowers")
    assert len((tmp_path / "network.txt").read_text().splitlines()) == 922


def test_simulate_outputs(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--json", "--checkpoint-dt", "1") == cli.EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["converged"] and set(doc) >= {"theta", "psi", "classification", "bw_residuals"}
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,pi[1],pi[2]")
    m = manifest(tmp_path, "simulate")
    assert m["config"]["rel_tol"] == 1e-10 and m["config"]["h_star"] == 1
    assert set(m["outputs"]) == {"trajectory.csv", "summary.json"}


def test_simulate_clamped_reports_fit(tmp_path):
    assert run(tmp_path, "simulate", "--clamp", "em-e", name="example1.json") == cli.EXIT_OK
    fit = json.loads((tmp_path / "summary.json").read_text())["rate_fit"]
    assert fit["r2"] > 0.99 and fit["slowest_flower"].startswith(("alpha", "beta", "gamma", "xi"))


def test_simulate_nonconverged(tmp_path):
    assert run(tmp_path, "simulate", "--t-max", "0.5") == cli.EXIT_NONCONVERGED


def test_manifest_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "-i", str(DATA / "minimal.json"), "-o", str(a), "--seed", "3"]) == 0
    first = manifest(a, "simulate")
    # replaying the recorded argv with another output directory gives identical files
    argv = list(first["argv"])
    argv[argv.index("-o") + 1] = str(b)
    assert cli.main(argv) == 0
    second = manifest(b, "simulate")
    assert first["outputs"] == second["outputs"] and first["input_sha256"] == second["input_sha256"]


def test_compare_and_oracle(tmp_path, capsys):
    assert run(tmp_path, "compare") == cli.EXIT_OK
    assert "max |diff|" in capsys.readouterr().out
    assert run(tmp_path, "oracle", "--json") == cli.EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["rel_diff"] < 1e-12


def test_oracle_guard_exit(tmp_path):
    assert run(tmp_path, "oracle", name="example1.json") == cli.EXIT_ERROR


@pytest.mark.parametrize("at", ["initial", "final"])
def test_spectrum(tmp_path, at):
    assert run(tmp_path, "spectrum", "--at", at) == cli.EXIT_OK
    doc = json.loads((tmp_path / "spectrum.json").read_text())
    assert doc["at"] == at and "theta[1]" in doc["flowers"]


def test_parse_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(hidden_states=["a"], visible_states=["x"], pi=[2.0], theta=[[1.0]],
                                   psi=[[1.0]], sequence=["x", "x"])))
    assert cli.main(["train", "-i", str(bad), "-o", str(tmp_path)]) == cli.EXIT_PARSE
    assert "field 'pi'" in capsys.readouterr().err


def test_bad_leader_exit(tmp_path):
    assert run(tmp_path, "compile", "--h-star", "5") == cli.EXIT_ERROR


def test_usage_error():
    assert cli.main(["nonsense"]) == 2
