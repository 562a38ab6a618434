import numpy as np
import pytest

from fluorocal import io
from fluorocal.errors import FormatError
from fluorocal.grid import SuperpixelGrid
from fluorocal.model import BetaMap
from fluorocal.synth import GenConfig, generate_world


@pytest.fixture(scope="module")
def world():
    return generate_world(GenConfig(shots=20, seed=5))


def test_dataset_round_trip(tmp_path, world):
    _, dataset, _ = world
    path = io.write_dataset(tmp_path / "d.csv", dataset, {"config_digest": "abc"})
    back = io.read_dataset(path)
    assert back.grid == dataset.grid
    np.testing.assert_array_equal(back.shot_ids, dataset.shot_ids)
    np.testing.assert_array_equal(back.cavity_jz, dataset.cavity_jz)
    np.testing.assert_array_equal(back.freq_factor, dataset.freq_factor)
    np.testing.assert_array_equal(back.counts, dataset.counts)
    assert back.contrast == dataset.contrast
    assert back.counts_scale == dataset.counts_scale
    assert back.meta == {"seed": 5, "config_digest": "abc"}


def test_dataset_layout(tmp_path, world):
    _, dataset, _ = world
    lines = io.write_dataset(tmp_path / "d.csv", dataset).read_text().splitlines()
    assert lines[0] == '# format: {"kind":"dataset","version":1}'
    header = next(line for line in lines if not line.startswith("#"))
    assert header.split(",")[:4] == ["shot_id", "cavity_jz", "freq_factor", "c0"]
    assert len(header.split(",")) == 3 + 192


def test_beta_round_trip_and_layout(tmp_path, rng):
    grid = SuperpixelGrid()
    beta = BetaMap(rng.normal() * 100, rng.uniform(size=grid.n) / 200, grid, 200.0)
    path = io.write_beta(tmp_path / "b.csv", beta, {"seed": 3})
    back = io.read_beta(path)
    assert back.bias == beta.bias
    np.testing.assert_array_equal(back.values, beta.values)
    assert back.counts_scale == 200.0
    body = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    assert body[0].startswith("bias,")
    assert len(body) == 1 + grid.n
    assert all("," not in line for line in body[1:])


def test_truth_and_field_round_trip(tmp_path, world):
    field, _, truths = world
    back = io.read_truth(io.write_truth(tmp_path / "t.csv", truths))
    assert back == truths
    f = io.read_field(io.write_field(tmp_path / "f.csv", field))
    np.testing.assert_array_equal(f.values, field.values)
    assert (f.seed, f.amplitude, f.correlation_length) == (field.seed, field.amplitude, field.correlation_length)


def test_report_round_trip(tmp_path):
    path = io.write_report(tmp_path / "r.csv", ["a", "b"], [[1, 0.1], [2, float("nan")]], {"seed": 1})
    meta, header, rows = io.read_report(path)
    assert header == ["a", "b"]
    assert rows == [["1", "0.10000000000000001"], ["2", "nan"]]
    assert meta["seed"] == 1


def test_format_value():
    assert io.format_value(0.1) == "0.10000000000000001"
    assert float(io.format_value(1 / 3)) == 1 / 3
    assert io.format_value(True) == "true"
    assert io.format_value(np.int64(4)) == "4"
    assert io.format_value(float("-inf")) == "-inf"
    with pytest.raises(FormatError):
        io.format_value("a,b")


def test_digest_is_order_independent():
    assert io.digest({"a": 1, "b": [1, 2]}) == io.digest({"b": [1, 2], "a": 1})
    assert len(io.digest({})) == 16


def write(tmp_path, text):
    path = tmp_path / "x.csv"
    path.write_text(text)
    return path


@pytest.mark.parametrize(
    "text, message",
    [
        ("a,b\n1,2\n", "missing format line"),
        ('# format: {"kind":"report","version":9}\na\n1\n', "unsupported format version"),
        ('# format: {"kind":"report","version":1}\n', "missing header"),
        ('# format: {"kind":"report","version":1}\na,b\n1\n', "has 1 fields"),
        ('# format: {"kind":"report","version":1}\n# bad: {\na\n1\n', "bad metadata"),
    ],
)
def test_malformed_tables(tmp_path, text, message):
    with pytest.raises(FormatError, match=message):
        io.read_report(write(tmp_path, text))


def test_wrong_kind(tmp_path, world):
    path = io.write_truth(tmp_path / "t.csv", world[2])
    with pytest.raises(FormatError, match="expected a dataset file"):
        io.read_dataset(path)


def test_missing_file(tmp_path):
    with pytest.raises(FormatError, match="no such file"):
        io.read_dataset(tmp_path / "nope.csv")


def test_non_numeric_dataset(tmp_path, world):
    path = io.write_dataset(tmp_path / "d.csv", world[1])
    text = path.read_text().replace("\n0,", "\nzero,", 1)
    with pytest.raises(FormatError, match="non-numeric"):
        io.read_dataset(write(tmp_path, text))


def test_beta_wrong_length(tmp_path):
    grid = SuperpixelGrid(rows=1, cols=2)
    path = io.write_beta(tmp_path / "b.csv", BetaMap(0.0, [1.0, 2.0], grid))
    lines = path.read_text().splitlines()
    with pytest.raises(FormatError, match="expected 2 weights"):
        io.read_beta(write(tmp_path, "\n".join(lines[:-1]) + "\n"))
    bad = [line if not line.startswith("bias") else "offset,1" for line in lines]
    with pytest.raises(FormatError, match="bias"):
        io.read_beta(write(tmp_path, "\n".join(bad) + "\n"))
