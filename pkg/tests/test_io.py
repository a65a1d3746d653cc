import json

import numpy as np
import pytest

from kinelim.errors import ConfigError
from kinelim.io import MAGIC, SnapshotWriter, load_toml, read_csv, read_snapshots, write_csv, write_json


def test_toml_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_toml(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[run\neps = ")
    with pytest.raises(ConfigError):
        load_toml(bad)
    good = tmp_path / "good.toml"
    good.write_text("[run]\neps = 0.1\n")
    assert load_toml(good) == {"run": {"eps": 0.1}}


def test_csv_round_trip_is_exact(tmp_path):
    rows = [{"t": 0.1, "x": 1 / 3, "n": 3, "ok": True}, {"t": 0.2, "x": np.float64(2 / 7), "n": np.int64(4), "ok": False}]
    write_csv(tmp_path / "a.csv", ["t", "x", "n", "ok"], rows)
    header, back = read_csv(tmp_path / "a.csv")
    assert header == ["t", "x", "n", "ok"]
    assert back[0]["x"] == 1 / 3 and back[1]["x"] == 2 / 7
    assert back[1]["ok"] == "false"


def test_json_sorted_and_numpy_safe(tmp_path):
    write_json(tmp_path / "a.json", {"b": np.arange(3), "a": np.float32(0.5), "c": float("nan")})
    text = (tmp_path / "a.json").read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": 0.5, "b": [0, 1, 2], "c": "nan"}


def test_snapshot_container(tmp_path):
    path = tmp_path / "s.bin"
    w = SnapshotWriter(path, (2, 3), {"eps": 0.1})
    arrs = [np.arange(6.0).reshape(2, 3) * k for k in range(3)]
    for k, a in enumerate(arrs):
        w.append(0.5 * k, a)
    with pytest.raises(ValueError):
        w.append(2.0, np.zeros(5))
    assert path.read_bytes().startswith(MAGIC)
    times, back, header = read_snapshots(path)
    np.testing.assert_array_equal(times, [0.0, 0.5, 1.0])
    for a, b in zip(arrs, back):
        np.testing.assert_array_equal(a, b)
    assert header["meta"] == {"eps": 0.1} and header["shape"] == [2, 3]
    (tmp_path / "x.bin").write_bytes(b"junk")
    with pytest.raises(ValueError):
        read_snapshots(tmp_path / "x.bin")
