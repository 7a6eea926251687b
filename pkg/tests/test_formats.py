import json

import numpy as np
import pytest

from randweld.ba_extension import DilatationField, dilatation, extend
from randweld.chaos_measure import CircleMap
from randweld.field_sampler import sample_band_field, sample_fourier_field
from randweld.formats import (
    GRID_MAGIC,
    config_hash,
    dumps,
    load_dilatation,
    load_realization,
    read_csv,
    read_grid,
    results_record,
    save_dilatation,
    save_realization,
    write_csv,
    write_grid,
)


@pytest.mark.parametrize("block", ["bin", "csv"])
@pytest.mark.parametrize("make", [lambda: sample_fourier_field(64, 3, 2), lambda: sample_band_field(5, 1)])
def test_realization_roundtrip(tmp_path, block, make):
    r = make()
    header = save_realization(r, tmp_path / "r", block=block, extra={"config_hash": "abc"})
    back = load_realization(header)
    assert np.array_equal(back.coefficients, r.coefficients)
    assert (back.backend, back.seed, back.replicate) == (r.backend, r.seed, r.replicate)
    assert json.loads(header.read_text())["config_hash"] == "abc"


def test_realization_version_guard(tmp_path):
    header = save_realization(sample_fourier_field(8, 0), tmp_path / "r")
    d = json.loads(header.read_text())
    d["version"] = 99
    header.write_text(json.dumps(d))
    with pytest.raises(ValueError):
        load_realization(header)


def test_grid_layout(tmp_path):
    xs, ys = np.arange(3) * 0.5, 1 + np.arange(2) * 0.25
    vals = np.array([[1 + 2j, 3, 4j], [5, 6 - 1j, 7]])
    p = write_grid(tmp_path / "g.rwg", "strip", xs, ys, vals)
    raw = p.read_bytes()
    assert raw[:8] == GRID_MAGIC
    n = int.from_bytes(raw[8:12], "little")
    header = json.loads(raw[12 : 12 + n])
    assert header["dims"] == [2, 3]
    payload = np.frombuffer(raw[12 + n :], dtype="<f8")
    assert payload[:4].tolist() == [1.0, 2.0, 3.0, 0.0]
    h, x2, y2, v2 = read_grid(p)
    assert np.allclose(x2, xs) and np.allclose(y2, ys) and np.array_equal(v2, vals)


def test_grid_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        write_grid(tmp_path / "g", "strip", np.arange(3), np.arange(2), np.zeros((3, 2)))
    (tmp_path / "bad").write_bytes(b"NOTAGRID" + b"\0" * 8)
    with pytest.raises(ValueError):
        read_grid(tmp_path / "bad")


def test_dilatation_roundtrip(tmp_path):
    mu = dilatation(extend(CircleMap(np.array([0, 0.3, 0.55, 1.0])), 16, 16))
    back = load_dilatation(save_dilatation(mu, tmp_path / "mu.rwg"))
    assert isinstance(back, DilatationField)
    assert np.array_equal(back.mu, mu.mu) and back.chart == "strip"


def test_csv_roundtrip(tmp_path):
    p = write_csv(tmp_path / "a.csv", {"x": [0.1, 0.2], "y": [1, 2]}, comment="config_hash=deadbeef")
    assert p.read_text().startswith("# config_hash=deadbeef")
    d = read_csv(p)
    assert np.allclose(d["x"], [0.1, 0.2]) and np.allclose(d["y"], [1, 2])


def test_canonical_json_and_hash():
    a = {"b": np.float64(1.5), "a": [np.int64(2), 3]}
    b = {"a": [2, 3], "b": 1.5}
    assert dumps(a) == dumps(b)
    assert config_hash(a) == config_hash(b)
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_results_record_schema():
    r = results_record(np.array([1.0]), 0.1, 10, 0, {"beta": 0.3}, extra_field=True)
    assert set(r) >= {"schema_version", "estimate", "stderr", "reps", "seed", "config", "config_hash"}
    assert r["config_hash"] == config_hash({"beta": 0.3}) and r["extra_field"] is True
