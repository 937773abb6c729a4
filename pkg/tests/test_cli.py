import json

import pytest

import tuner
from bench import BenchmarkReport, raw_from_csv
from search_space import load_space, parse_vector, validate

SPACE = {"knobs": [
    {"name": "bias", "kind": "integer", "lower": 0, "upper": 7},
    {"name": "gain", "kind": "integer", "lower": 0, "upper": 7},
]}


def _write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def inputs(tmp_path):
    return {
        "space": _write(tmp_path / "space.json", SPACE),
        "profiles": _write(tmp_path / "profiles.json", {"generate": {"seed": 5, "n_devices": 8, "n_rows": 40}}),
        "surrogate_config": _write(tmp_path / "surrogate_config.json",
                                   {"hidden_sizes": [6], "learning_rate": 0.02, "epochs": 15, "seed": 1}),
        "train_config": _write(tmp_path / "train_config.json",
                               {"episodes_per_update": 2, "hidden_size": 4, "log_every": 0, "seed": 2}),
    }


def _gen(inputs, out):
    return tuner.main(["gen-data", "--space", inputs["space"], "--profiles", inputs["profiles"], "--out", str(out)])


@pytest.fixture
def trained(inputs, tmp_path):
    out = tmp_path / "run"
    assert _gen(inputs, out) == 0
    assert tuner.main(["train-surrogate", "--space", inputs["space"], "--config", inputs["surrogate_config"],
                       "--out", str(out)]) == 0
    assert tuner.main(["train-agent", "--space", inputs["space"], "--objective", str(out / "surrogate.json"),
                       "--config", inputs["train_config"], "--updates", "2", "--episode-length", "3",
                       "--out", str(out)]) == 0
    return out


def test_gen_data_is_reproducible(inputs, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert _gen(inputs, first) == 0
    assert _gen(inputs, second) == 0
    csvs = sorted(p.name for p in (first / "data").iterdir())
    assert csvs == [f"device{i}.csv" for i in range(8)]
    for name in csvs:
        assert (first / "data" / name).read_bytes() == (second / "data" / name).read_bytes()
    assert (first / "data" / "device0.csv").read_text().splitlines()[0] == "bias,gain,performance"
    manifest = json.loads((first / "manifest.json").read_text())
    assert len(manifest["artifacts"]["datasets"]) == 8
    assert manifest["seeds"]["gen_data"] == 0


def test_gen_data_rejects_empty_datasets(inputs, tmp_path, capsys):
    profiles = _write(tmp_path / "empty.json", {"generate": {"seed": 5, "n_devices": 2, "n_rows": 0}})
    code = tuner.main(["gen-data", "--space", inputs["space"], "--profiles", profiles, "--out", str(tmp_path / "x")])
    assert code == 2
    assert "error: invalid-input:" in capsys.readouterr().err


def test_gen_data_needs_inputs(tmp_path, capsys):
    assert tuner.main(["gen-data", "--out", str(tmp_path)]) == 2
    assert "error: invalid-input:" in capsys.readouterr().err


def test_train_surrogate_without_data(inputs, tmp_path, capsys):
    assert tuner.main(["train-surrogate", "--space", inputs["space"], "--out", str(tmp_path / "none")]) == 4
    assert "error: missing-artifact:" in capsys.readouterr().err


def test_pipeline_artifacts(trained):
    manifest = json.loads((trained / "manifest.json").read_text())
    for name in ("space", "profiles", "datasets", "surrogate", "checkpoint", "learning_curve"):
        assert name in manifest["artifacts"]
    assert set(manifest["config_hashes"]) == {"surrogate", "train"}
    assert len((trained / "learning_curve.csv").read_text().splitlines()) == 3


def test_tune_prints_a_valid_point(trained, inputs, capsys):
    capsys.readouterr()
    code = tuner.main(["tune", "--space", inputs["space"], "--objective", str(trained / "surrogate.json"),
                       "--checkpoint", str(trained / "agent.json"), "--x0", "3,4", "--episode-length", "5",
                       "--out", str(trained)])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    x_line = next(line for line in lines if line.startswith("x* = "))
    f_line = next(line for line in lines if line.startswith("f(x*) = "))
    space = load_space(inputs["space"])
    best_x = parse_vector(x_line[len("x* = "):], space)
    assert validate(space, best_x) == []
    result = json.loads((trained / "tune_result.json").read_text())
    assert result["evaluations"] == 6
    assert result["x0"] == [3, 4]
    assert float(f_line[len("f(x*) = "):]) == pytest.approx(result["best_f"])


def test_tune_rejects_foreign_space(trained, tmp_path, capsys):
    other = _write(tmp_path / "other.json", {"knobs": SPACE["knobs"][:1]})
    code = tuner.main(["tune", "--space", other, "--objective", str(trained / "surrogate.json"),
                       "--checkpoint", str(trained / "agent.json"), "--out", str(tmp_path / "t")])
    assert code == 3
    assert "error: schema-mismatch:" in capsys.readouterr().err


def test_tune_missing_checkpoint(trained, tmp_path, capsys):
    code = tuner.main(["tune", "--objective", str(trained / "surrogate.json"),
                       "--checkpoint", str(tmp_path / "nope.json"), "--out", str(tmp_path / "t")])
    assert code == 4
    assert "error: missing-artifact:" in capsys.readouterr().err


def test_bench_then_report(trained, inputs):
    out = str(trained)
    code = tuner.main(["bench", "--space", inputs["space"], "--objective", str(trained / "surrogate.json"),
                       "--profiles", inputs["profiles"], "--checkpoint", str(trained / "agent.json"),
                       "--methods", "l2o", "random", "powell_budget", "--inits", "4", "--episode-length", "3",
                       "--seed", "9", "--out", out])
    assert code == 0
    assert tuner.main(["report", "--out", out]) == 0
    report = BenchmarkReport.load(str(trained / "report.json"))
    assert list(report.methods) == ["l2o", "random", "powell_budget"]
    assert all(len(s.true_raw) == 4 for s in report.methods.values())
    assert raw_from_csv(str(trained / "report.csv")) == report.raw_matrix()
    manifest = json.loads((trained / "manifest.json").read_text())
    assert manifest["seeds"]["bench"] == 9
    assert "report_csv" in manifest["artifacts"]


def test_bench_l2o_without_checkpoint(tmp_path, capsys):
    code = tuner.main(["bench", "--methods", "l2o", "--inits", "2", "--out", str(tmp_path)])
    assert code == 4
    assert "error: missing-artifact:" in capsys.readouterr().err


def test_unknown_config_key(inputs, trained, tmp_path, capsys):
    bad = _write(tmp_path / "bad.json", {"episodes": 3})
    code = tuner.main(["train-agent", "--objective", str(trained / "surrogate.json"), "--config", bad,
                       "--out", str(tmp_path / "a")])
    assert code == 2
    assert "episodes" in capsys.readouterr().err
