import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from fluorocal import io
from fluorocal.cli import EXIT_FAILURE, EXIT_USAGE, main

FIXTURES = Path(__file__).parent / "fixtures"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--seed", "7", "--out", str(out)]) == 0
    return out


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_generate_matches_golden_fixture(generated):
    golden = json.loads((FIXTURES / "generate_seed7.json").read_text())
    meta, _, _ = io.read_table(generated / "dataset.csv")
    assert meta["config_digest"] == golden["config_digest"]
    for name, digest in golden["sha256"].items():
        assert sha256(generated / name) == digest, name


def test_generate_outputs_embed_metadata(generated):
    for name in ("dataset.csv", "truth.csv", "field.csv"):
        meta, _, _ = io.read_table(generated / name)
        assert meta["format"]["version"] == io.FORMAT_VERSION
        assert meta["seed"] == 7
        assert "config_digest" in meta
    config = json.loads((generated / "config.json").read_text())
    assert config["seed"] == 7 and config["format"]["version"] == io.FORMAT_VERSION


def test_generate_zero_shots_rejected(tmp_path, capsys):
    code, _, err = run(capsys, "generate", "--shots", "0", "--out", tmp_path)
    assert code == EXIT_FAILURE
    assert err.startswith("error: config:")


def test_generate_from_written_config(tmp_path, generated, capsys):
    code, _, _ = run(capsys, "generate", "--config", generated / "config.json", "--out", tmp_path)
    assert code == 0
    assert sha256(tmp_path / "dataset.csv") == sha256(generated / "dataset.csv")


def test_train_then_evaluate(tmp_path, generated, capsys):
    data = generated / "dataset.csv"
    code, out, _ = run(capsys, "train", "--data", data, "--out", tmp_path / "t")
    assert code == 0
    assert "beta.csv" in out
    beta = io.read_beta(tmp_path / "t" / "beta.csv")
    assert beta.all_positive()
    _, header, rows = io.read_report(tmp_path / "t" / "train_report.csv")
    row = dict(zip(header, rows[0]))
    assert int(row["m_c"]) > 0 and int(row["iterations"]) > 0
    code, _, _ = run(capsys, "evaluate", "--data", data, "--beta", tmp_path / "t" / "beta.csv", "--out", tmp_path / "e")
    assert code == 0
    meta, header, rows = io.read_report(tmp_path / "e" / "evaluation.csv")
    assert [r[0] for r in rows] == ["no-correction", "single-ratio", "supervised"]
    dtheta = [float(r[header.index("delta_theta")]) for r in rows]
    assert dtheta[0] > dtheta[1] > dtheta[2]
    assert meta["below_cutoff_only"] is True


def test_train_normal_solver(tmp_path, generated, capsys):
    code, _, _ = run(capsys, "train", "--data", generated / "dataset.csv", "--solver", "normal", "--out", tmp_path)
    assert code == 0
    _, header, rows = io.read_report(tmp_path / "train_report.csv")
    assert rows[0][header.index("termination")] == "closed-form"


def test_train_without_samples(tmp_path, generated, capsys):
    code, _, err = run(capsys, "train", "--data", generated / "dataset.csv", "--cutoff", "1e9", "--out", tmp_path)
    assert code == EXIT_FAILURE
    assert err.startswith("error: no-samples:")
    assert len(err.strip().splitlines()) == 1


def test_singular_normal_path(tmp_path, generated, capsys):
    args = ["--data", generated / "dataset.csv", "--lambda", "0", "--train-count", "40", "--out", tmp_path]
    code, _, err = run(capsys, "train", *args, "--solver", "normal")
    assert code == EXIT_FAILURE and err.startswith("error: singular:")
    code, _, err = run(capsys, "train", *args)
    assert code == 0
    assert "rank-deficient" in err


def test_singleton_sweep_equals_train(tmp_path, generated, capsys):
    data = generated / "dataset.csv"
    assert run(capsys, "sweep", "--data", data, "--axis", "lambda", "--values", "20", "--out", tmp_path)[0] == 0
    assert run(capsys, "train", "--data", data, "--out", tmp_path)[0] == 0
    _, sh, srows = io.read_report(tmp_path / "sweep_lambda.csv")
    _, th, trows = io.read_report(tmp_path / "train_report.csv")
    assert srows[0][sh.index("delta_theta")] == trows[0][th.index("validation_delta_theta")]


def test_sweep_rejects_bad_axis(tmp_path, generated, capsys):
    code, _, err = run(capsys, "sweep", "--data", generated / "dataset.csv", "--axis", "sigma", "--out", tmp_path)
    assert code == EXIT_USAGE
    assert err.startswith("error: usage:")


def test_sweep_rejects_bad_values(tmp_path, generated, capsys):
    code, _, err = run(capsys, "sweep", "--data", generated / "dataset.csv", "--axis", "cutoff", "--values", "a,b", "--out", tmp_path)
    assert code == EXIT_USAGE


def test_learning_curve_command(tmp_path, generated, capsys):
    code, _, _ = run(capsys, "learning-curve", "--data", generated / "dataset.csv", "--sizes", "5,20", "--out", tmp_path)
    assert code == 0
    _, header, rows = io.read_report(tmp_path / "learning_curve.csv")
    assert header[0] == "sample-size"
    assert [r[1] for r in rows] == ["5", "20"]


def test_evaluate_empty_test_set(tmp_path, generated, capsys):
    data = generated / "dataset.csv"
    assert run(capsys, "train", "--data", data, "--out", tmp_path)[0] == 0
    code, _, err = run(
        capsys, "evaluate", "--data", data, "--beta", tmp_path / "beta.csv", "--train-count", "550", "--out", tmp_path
    )
    assert code == EXIT_FAILURE
    assert err.startswith("error: no-samples:")


def test_evaluate_transfer(tmp_path, generated, capsys):
    data = generated / "dataset.csv"
    other = tmp_path / "other"
    assert run(capsys, "generate", "--seed", "8", "--field-seed", "7", "--shots", "60",
               "--mean-theta", "0.025", "--mean-atoms", "234000", "--out", other)[0] == 0
    assert run(capsys, "train", "--data", data, "--out", tmp_path)[0] == 0
    code, _, _ = run(capsys, "evaluate", "--data", other / "dataset.csv", "--train-data", data,
                     "--beta", tmp_path / "beta.csv", "--out", tmp_path / "e")
    assert code == 0
    meta, header, rows = io.read_report(tmp_path / "e" / "evaluation.csv")
    assert meta["transfer"] is True
    assert int(rows[2][header.index("sample_count")]) > 2


def test_missing_dataset(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--data", tmp_path / "none.csv", "--out", tmp_path)
    assert code == EXIT_FAILURE
    assert err.startswith("error: format:")


def test_bad_config_file(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text('{"hyper": {"lam": -1}}')
    code, _, err = run(capsys, "generate", "--config", path, "--out", tmp_path)
    assert code == EXIT_FAILURE and err.startswith("error: ")
    path.write_text('{"network": {}}')
    code, _, err = run(capsys, "generate", "--config", path, "--out", tmp_path)
    assert code == EXIT_FAILURE and "unknown sections" in err


def test_missing_subcommand(capsys):
    code, _, err = run(capsys)
    assert code == EXIT_USAGE


def test_config_overrides_recorded(tmp_path, generated, capsys):
    code, _, _ = run(capsys, "train", "--data", generated / "dataset.csv", "--lambda", "5", "--cutoff", "100",
                     "--seed", "3", "--out", tmp_path)
    assert code == 0
    meta, _, _ = io.read_report(tmp_path / "train_report.csv")
    assert meta["config"]["hyper"] == {"lam": 5.0, "jz_cutoff": 100.0, "normalize": True}
    assert meta["seed"] == 3 and meta["config"]["split"]["shuffle_seed"] == 3
    assert np.isfinite(io.read_beta(tmp_path / "beta.csv").values).all()
