import csv
import json

import pytest

from qrenn import cli
from qrenn.config import ConfigError, parse_config, serialize


# -- config -------------------------------------------------------------------

def test_minimal_gradstats_defaults():
    cfg = parse_config({"command": "gradstats", "seed": 1})
    assert cfg.parameters["samples"] == 500 and cfg.parameters["L"] == 3
    assert cfg.params_object().seed == 1


def test_unknown_keys_named():
    with pytest.raises(ConfigError, match="parameters.sampels"):
        parse_config({"command": "gradstats", "seed": 1, "parameters": {"sampels": 10}})
    with pytest.raises(ConfigError, match="seeed"):
        parse_config({"command": "gradstats", "seeed": 1})


def test_round_trip():
    cfg = parse_config({"command": "train", "seed": 3, "parameters": {"n": 2, "epochs": 4}})
    assert parse_config(serialize(cfg)) == cfg


@pytest.mark.parametrize("doc, path", [
    ({"command": "train", "seed": 1, "parameters": {"n": "3"}}, "parameters.n"),
    ({"command": "train", "seed": 1, "parameters": {"train_phi": 1}}, "parameters.train_phi"),
    ({"command": "train", "seed": 1.5}, "seed"),
    ({"command": "train", "seed": -1}, "seed"),
    ({"command": "train"}, "seed"),
    ({"command": "train", "seed": 1, "threads": -2}, "threads"),
    ({"command": "launch", "seed": 1}, "command"),
    ({"command": "train", "seed": 1, "parameters": {"learning_rate": 0}}, "parameters"),
    ({"command": "gradstats", "seed": 1, "parameters": {"n_list": [[1]]}}, "parameters.n_list[0]"),
])
def test_config_errors_carry_path(doc, path):
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    assert exc.value.path == path


def test_overlap_scan_needs_no_seed():
    assert parse_config({"command": "overlap-scan"}).seed is None


def test_cli_overrides_document():
    cfg = parse_config({"command": "train", "seed": 1, "output_dir": "a"}, "train", seed=7, output_dir="b")
    assert (cfg.seed, cfg.output_dir) == (7, "b")
    with pytest.raises(ConfigError):
        parse_config({"command": "spt", "seed": 1}, "train")


# -- running ------------------------------------------------------------------

SMALL = {
    "gradstats": {"n_list": [1, 2], "samples": 20, "T": 4},
    "train": {"n": 2, "m": 1, "T": 2, "total": 40, "train_size": 20, "epochs": 3},
    "spt": {"n": 3, "T": 2, "total": 20, "train_size": 8, "epochs": 2, "training_sizes": [4], "repeats": 2},
    "dla-analyze": {"m": 1, "n": 1, "hamiltonian": "Z"},
    "overlap-scan": {"n_list": [3], "lambda_points": 3},
    "dataset-gen": {"n": 2, "total": 10, "train_size": 4},
}


def _run(tmp_path, cmd, params, name="out", seed=11, extra=()):
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps({"parameters": params}))
    out = tmp_path / name
    args = [cmd, "--config", str(cfg_path), "--output", str(out), *extra]
    if seed is not None:
        args += ["--seed", str(seed)]
    return cli.main(args), out


@pytest.mark.parametrize("cmd", list(SMALL))
def test_commands_deterministic_with_schema(cmd, tmp_path):
    code_a, a = _run(tmp_path, cmd, SMALL[cmd], "a")
    code_b, b = _run(tmp_path, cmd, SMALL[cmd], "b")
    assert code_a == code_b == 0
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert f"{cmd}.csv" in csvs
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    with open(a / f"{cmd}.csv") as fh:
        assert next(csv.reader(fh)) == cli.SCHEMAS[cmd]
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["seed"] == 11
    for fname, digest in manifest["files"].items():
        assert cli.sha256_file(a / fname) == digest
    assert manifest["wall_time"] >= 0


def test_dla_manifest(tmp_path):
    _, out = _run(tmp_path, "dla-analyze", SMALL["dla-analyze"])
    s = json.loads((out / "manifest.json").read_text())["summary"]
    assert (s["closure_dim"], s["ideal_dims"], s["center_dim"]) == (7, [3, 3], 1)


def test_dla_random_hamiltonian(tmp_path):
    _, out = _run(tmp_path, "dla-analyze", {"m": 1, "n": 2, "hamiltonian": "random", "distinct_eigenvalues": 3})
    s = json.loads((out / "manifest.json").read_text())["summary"]
    assert s["ideal_dims"] == [3, 3, 3]


def test_train_manifest_and_figures(tmp_path):
    _, out = _run(tmp_path, "train", dict(SMALL["train"], feature_tag="pauli", n=3, m=2, T=4))
    s = json.loads((out / "manifest.json").read_text())["summary"]
    assert 0 <= s["test_accuracy"] <= 1
    assert (out / "train_loss.png").stat().st_size > 0


def test_figures_written(tmp_path):
    for cmd in ("gradstats", "spt", "overlap-scan"):
        _, out = _run(tmp_path, cmd, SMALL[cmd], cmd)
        assert list(out.glob("*.png"))


def test_config_error_exit_and_record(tmp_path):
    code, out = _run(tmp_path, "train", {"epochs": 1, "typo": 2})
    assert code == 2
    rec = json.loads((out / "error.json").read_text())
    assert rec["path"] == "parameters.typo" and rec["module"] == "qrenn.config"
    code, _ = _run(tmp_path, "train", SMALL["train"], "noseed", seed=None)
    assert code == 2


def test_runtime_error_provenance(tmp_path):
    code, out = _run(tmp_path, "dla-analyze", {"m": 1, "n": 2, "hamiltonian": "Z"})
    assert code == 1
    rec = json.loads((out / "error.json").read_text())
    assert rec["error"] == "ValueError" and rec["module"].startswith("qrenn.")


def test_yaml_config_and_threads_env(tmp_path, monkeypatch):
    path = tmp_path / "c.yaml"
    path.write_text("command: overlap-scan\nparameters:\n  n_list: [3]\n  lambda_points: 2\n")
    monkeypatch.setenv("QRENN_THREADS", "1")
    out = tmp_path / "y"
    assert cli.main(["overlap-scan", "--config", str(path), "--output", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["threads"] == 1


def test_summary_line(tmp_path, capsys):
    _run(tmp_path, "dla-analyze", SMALL["dla-analyze"])
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("qrenn dla-analyze: ok") and "closure_dim=7" in line
