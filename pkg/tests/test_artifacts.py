import json

import numpy as np
import pandas as pd
import pytest

from modules import artifacts
from modules.errors import ArtifactError, DimensionMismatch
from modules.hindsight import ComparatorTrace
from modules.model import ObservationBatch, TopologySnapshot


def test_snapshots_round_trip(tmp_path, rng):
    snaps = []
    for t in (1, 2):
        A = rng.standard_normal((3, 3))
        np.fill_diagonal(A, 0.0)
        snaps.append(TopologySnapshot(t=t, A=A, b=rng.standard_normal(3)))
    path = tmp_path / "ground_truth.csv"
    artifacts.write_snapshots_csv(snaps, path)

    frame = pd.read_csv(path)
    assert list(frame.columns) == ["kind", "t", "i", "j", "value"]
    assert len(frame) == 2 * (6 + 3)
    assert frame.loc[frame["kind"] == "b", "j"].isna().all()

    loaded = artifacts.read_snapshots_csv(path)
    for want, got in zip(snaps, loaded):
        assert got.t == want.t
        np.testing.assert_array_equal(got.A, want.A)
        np.testing.assert_array_equal(got.b, want.b)


def test_observations_round_trip(tmp_path, rng):
    X = rng.standard_normal((3, 2))
    batches = [ObservationBatch(t=t, Y=rng.standard_normal((3, 2)), X=X) for t in (1, 2, 3)]
    artifacts.write_observations(batches, X, tmp_path / "obs")
    assert (tmp_path / "obs" / "Y_t0001.csv").is_file()

    X_back, loaded = artifacts.read_observations(tmp_path / "obs", tmp_path / "obs" / "X.csv")
    np.testing.assert_array_equal(X_back, X)
    assert [b.t for b in loaded] == [1, 2, 3]
    for want, got in zip(batches, loaded):
        np.testing.assert_array_equal(got.Y, want.Y)


def test_observations_require_contiguous_times(tmp_path, rng):
    X = rng.standard_normal((2, 2))
    batches = [ObservationBatch(t=t, Y=X, X=X) for t in (1, 2, 3)]
    artifacts.write_observations(batches, X, tmp_path)
    (tmp_path / "Y_t0002.csv").unlink()
    with pytest.raises(ArtifactError):
        artifacts.read_observations(tmp_path, tmp_path / "X.csv")


def test_observation_shape_mismatch(tmp_path, rng):
    X = rng.standard_normal((2, 2))
    artifacts.write_observations([ObservationBatch(t=1, Y=X, X=X)], X, tmp_path)
    artifacts.write_frame(pd.DataFrame(np.ones((3, 2))), tmp_path / "X.csv")
    with pytest.raises(DimensionMismatch):
        artifacts.read_observations(tmp_path, tmp_path / "X.csv")


def test_missing_observation_directory(tmp_path):
    with pytest.raises(ArtifactError):
        artifacts.read_observations(tmp_path / "absent", tmp_path / "X.csv")


def test_json_is_sorted(tmp_path):
    path = tmp_path / "doc.json"
    artifacts.write_json({"b": 1, "a": [1.5, None]}, path)
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [1.5, None], "b": 1}


def test_checksums_skip_metadata(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "x.csv").write_text("t\n1\n")
    (tmp_path / "metadata.json").write_text("{}")
    sums = artifacts.checksums(tmp_path)
    assert list(sums) == ["sub/x.csv"]
    assert len(sums["sub/x.csv"]) == 64


class TestStagedOutput:
    def test_moves_into_place(self, tmp_path):
        target = tmp_path / "run"
        target.mkdir()
        (target / "stale.txt").write_text("old")
        with artifacts.staged_output(target) as staging:
            (staging / "new.txt").write_text("new")
        assert (target / "new.txt").read_text() == "new"
        assert not (target / "stale.txt").exists()
        assert [p.name for p in tmp_path.iterdir()] == ["run"]

    def test_failure_leaves_nothing(self, tmp_path):
        target = tmp_path / "run"
        with pytest.raises(RuntimeError):
            with artifacts.staged_output(target) as staging:
                (staging / "partial.txt").write_text("x")
                raise RuntimeError("boom")
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []

    def test_cleanup_removes_active_staging(self, tmp_path):
        with pytest.raises(KeyboardInterrupt):
            with artifacts.staged_output(tmp_path / "run") as staging:
                artifacts.cleanup_staging()
                assert not staging.exists()
                raise KeyboardInterrupt
        assert list(tmp_path.iterdir()) == []


def test_comparators_layout(tmp_path):
    v_star = np.arange(2 * 3 * 2, dtype=float).reshape(2, 3, 2)
    trace = ComparatorTrace(v_star=v_star, converged=np.array([[True, False, True]] * 2),
                            iterations=np.arange(6).reshape(2, 3), degenerate=np.zeros((2, 3), bool))
    path = tmp_path / "comparators.csv"
    artifacts.write_comparators_csv(trace, path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["t", "i", "coordinate", "value", "converged", "iterations"]
    row = frame[(frame.t == 2) & (frame.i == 1) & (frame.coordinate == 0)]
    assert row["value"].item() == v_star[1, 1, 0]
    assert not row["converged"].item()
    assert row["iterations"].item() == 4
    assert frame["t"].is_monotonic_increasing
