import json

import pytest

from infharm.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, run


def manifest(path):
    return json.loads((path / "manifest.json").read_text())


def test_residual_success_writes_manifest(tmp_path):
    assert run(["residual", "--map", "affine", "--grid", "11x11", "--out", str(tmp_path)]) == EXIT_OK
    m = manifest(tmp_path)
    assert m["seed"] == 0 and m["command"] == "residual"
    names = {f["file"] for f in m["files"]}
    assert {"residual.json", "summary.json"} <= names
    assert json.loads((tmp_path / "summary.json").read_text())["seed"] == 0


def test_residual_tolerance_failure_exit_one(tmp_path):
    code = run(["residual", "--map", "quadratic", "--grid", "9x9", "--tol-residual", "1e-12",
                "--out", str(tmp_path)])
    assert code == EXIT_FAIL


@pytest.mark.parametrize("argv", [
    ["residual"],
    ["residual", "--map", "no_such_map"],
    ["flow", "--map", "affine", "--point", "1,2,3"],
    ["residual", "--map", "affine", "--grid", "banana"],
    ["residual", "--map", "affine", "--config", "/nonexistent.json"],
    ["verify-all", "--only", "x"],
    ["vary", "--map", "plane", "--bogus"],
    [],
])
def test_config_errors_exit_two(argv):
    assert run(argv) == EXIT_CONFIG


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["geometry", "--map", "catenoid", "--points", "20", "--seed", "3"]
    assert run(argv + ["--out", str(a)]) == EXIT_OK
    assert run(argv + ["--out", str(b)]) == EXIT_OK
    for f in manifest(a)["files"]:
        assert (a / f["file"]).read_bytes() == (b / f["file"]).read_bytes()
    assert manifest(a) == manifest(b)
    assert manifest(a)["seed"] == 3


def test_config_file_names_command(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"command": "scan", "map": "aronsson_43", "grid": "21x21",
                               "options": {"domain": "1.2:1.8,1.2:1.8"}}))
    out = tmp_path / "out"
    assert run(["--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert manifest(out)["command"] == "scan"


def test_config_file_command_mismatch(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"command": "scan"}))
    assert run(["residual", "--map", "affine", "--config", str(cfg)]) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ["phase", "--map", "exp_diag", "--grid", "9x9"],
    ["classify", "--map", "catenoid", "--grid", "15x15"],
    ["vary", "--map", "affine", "--n-variations", "5", "--resolution", "15"],
    ["flow", "--map", "exp_diag", "--domain", "0.1:0.9,-0.9:-0.1", "--point", "0.5,-0.5"],
    ["psolve", "--map", "affine", "--grid", "9x9", "--schedule", "2,4"],
])
def test_subcommands_succeed(argv, tmp_path):
    assert run(argv + ["--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "manifest.json").exists()


def test_psolve_boundary_file(tmp_path):
    rows = ["x,y,u1"] + [f"{x},{y},{2 * x - y}" for x in (0, 0.5, 1) for y in (0, 0.5, 1)]
    f = tmp_path / "b.csv"
    f.write_text("\n".join(rows) + "\n")
    argv = ["psolve", "--boundary-file", str(f), "--domain", "0:1,0:1", "--grid", "3x3", "--p", "4"]
    assert run(argv + ["--out", str(tmp_path / "o")]) == EXIT_OK
    assert run(argv[:-4]) == EXIT_CONFIG


def test_verify_all_subset(tmp_path, capsys):
    assert run(["verify-all", "--only", "1,9", "--out", str(tmp_path)]) == EXIT_OK
    assert capsys.readouterr().err.count("[PASS]") == 2
    table = json.loads((tmp_path / "acceptance.json").read_text())
    assert [c["number"] for c in table["criteria"]] == [1, 9]
