"""Checkpoint container: bit-exact arrays, metadata, and format guards."""

import json
import os

import numpy as np
import pytest

from flowcl.errors import CheckpointError
from flowcl.numgrad import load_arrays, save_arrays


class TestCheckpointRoundtrip:
    def test_arrays_survive_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        arrays = {
            "weights": rng.normal(size=(4, 3)),
            "tiny": np.array([np.pi, np.e, 1e-300, -0.0]),
            "counter": np.array(17, dtype=np.int64),
        }
        path = str(tmp_path / "ck.npz")
        save_arrays(path, arrays, meta={"kind": "test"})
        loaded, meta = load_arrays(path)
        assert set(loaded) == set(arrays)
        for name in arrays:
            np.testing.assert_array_equal(loaded[name], arrays[name])
            assert loaded[name].dtype == arrays[name].dtype
        assert meta == {"kind": "test"}

    def test_meta_defaults_to_empty_dict(self, tmp_path):
        path = str(tmp_path / "ck.npz")
        save_arrays(path, {"a": np.zeros(2)})
        _, meta = load_arrays(path)
        assert meta == {}

    def test_nested_meta_preserved(self, tmp_path):
        meta = {"config": {"layers": [8, 16], "tau": 0.5}, "classes": ["a", "b"]}
        path = str(tmp_path / "ck.npz")
        save_arrays(path, {"a": np.ones(1)}, meta=meta)
        _, got = load_arrays(path)
        assert got == meta

    def test_no_temp_file_left_behind(self, tmp_path):
        path = str(tmp_path / "ck.npz")
        save_arrays(path, {"a": np.ones(1)})
        assert os.listdir(tmp_path) == ["ck.npz"]

    def test_overwrite_replaces_content(self, tmp_path):
        path = str(tmp_path / "ck.npz")
        save_arrays(path, {"a": np.ones(3)})
        save_arrays(path, {"b": np.zeros(2)})
        loaded, _ = load_arrays(path)
        assert set(loaded) == {"b"}


class TestCheckpointGuards:
    def test_foreign_npz_rejected(self, tmp_path):
        path = str(tmp_path / "foreign.npz")
        np.savez(path, stuff=np.ones(3))
        with pytest.raises(CheckpointError):
            load_arrays(path)

    def test_wrong_format_version_rejected(self, tmp_path):
        path = str(tmp_path / "future.npz")
        header = json.dumps({"format_version": 99, "meta": {}})
        np.savez(path, __meta__=np.array(header))
        with pytest.raises(CheckpointError):
            load_arrays(path)

    def test_reserved_name_rejected(self, tmp_path):
        with pytest.raises(CheckpointError):
            save_arrays(str(tmp_path / "x.npz"), {"__meta__": np.ones(1)})
