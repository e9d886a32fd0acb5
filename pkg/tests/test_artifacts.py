import numpy as np
import pytest

from coldstart import artifacts, generate_dataset
from coldstart.dynamics import Trajectory
from coldstart.exceptions import ConfigError


def test_artifact_roundtrip(tmp_path):
    path = tmp_path / "thing.txt"
    meta = {"version": 1, "epsilon": 0.123456789012345678, "label": "abc"}
    arrays = {
        "vec": np.array([1.0, -2.5e-17, 3.0]),
        "mat": np.arange(6, dtype=float).reshape(2, 3) / 7.0,
        "ints": np.array([[1, 2], [3, 4]], dtype=np.int64),
    }
    artifacts.write_artifact(path, "test-kind", meta, arrays)
    kind, meta2, arrays2 = artifacts.read_artifact(path)
    assert kind == "test-kind"
    assert float(meta2["epsilon"]) == meta["epsilon"]
    assert meta2["label"] == "abc"
    for name in arrays:
        assert np.array_equal(arrays2[name], arrays[name])
    assert arrays2["ints"].dtype == np.int64


def test_artifact_kind_check(tmp_path):
    path = tmp_path / "thing.txt"
    artifacts.write_artifact(path, "alpha", {}, {"x": np.array([1.0])})
    with pytest.raises(ConfigError):
        artifacts.read_artifact(path, expected_kind="beta")


def test_artifact_malformed(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("not an artifact\n")
    with pytest.raises(ConfigError):
        artifacts.read_artifact(path)


def test_trajectory_csv_roundtrip(tmp_path):
    traj = Trajectory(dt=0.2, u=np.array([0.1, 0.25, 0.4]), v=np.array([1.0, 2.0, 3.0]))
    path = tmp_path / "traj.csv"
    artifacts.save_trajectory_csv(path, traj)
    back = artifacts.load_trajectory_csv(path)
    assert back.dt == pytest.approx(0.2)
    assert np.array_equal(back.u, traj.u)
    assert np.array_equal(back.v, traj.v)


def test_dataset_roundtrip(tmp_path):
    ds = generate_dataset(3, 1, 1, seed=2, t_end=2.0)
    out = tmp_path / "data"
    artifacts.save_dataset(out, ds)
    back = artifacts.load_dataset(out)
    assert len(back.train) == 3 and len(back.val) == 1 and len(back.test) == 1
    assert back.seed == 2
    assert back.params.b == ds.params.b
    assert np.array_equal(back.train[0].u, ds.train[0].u)
    assert np.array_equal(back.test[0].v, ds.test[0].v)


def test_manifest_hash_changes_with_content(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    artifacts.save_dataset(a, generate_dataset(2, 1, 1, seed=0, t_end=2.0))
    artifacts.save_dataset(b, generate_dataset(2, 1, 1, seed=1, t_end=2.0))
    assert artifacts.manifest_hash(a) != artifacts.manifest_hash(b)
    assert artifacts.manifest_hash(a) == artifacts.sha256_file(a / "manifest.json")
