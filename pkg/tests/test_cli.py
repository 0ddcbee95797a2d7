"""End-to-end runs of the flowcl command on a synthetic workspace."""

import hashlib
import json
import os

import numpy as np
import pytest

from flowcl.cli import main
from flowcl.dataio import load_encoded, load_schema, load_state, save_schema
from flowcl.model import build_encoder, load_encoder
from flowcl.synth import blob_schema, generate_blobs, subset_schema, write_csv


def sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One preprocessed + pretrained synthetic workspace shared by the module."""
    root = tmp_path_factory.mktemp("cliws")
    os.makedirs(root / "prep", exist_ok=True)
    schema = blob_schema(16)
    save_schema(str(root / "blobs.json"), schema)
    records = generate_blobs(schema, 200, seed=11)
    write_csv(str(root / "blobs.csv"), schema, records)
    target = subset_schema(schema, [f.name for f in schema.features][:13])
    save_schema(str(root / "target13.json"), target)
    target_records = [type(r)(r.values[:13], r.label) for r in records]
    write_csv(str(root / "target13.csv"), target, target_records)
    arch = {"layers": [["conv", 8], ["pool", 2], ["conv", 16]], "context_dim": 8,
            "epochs": 12, "batch_size": 16, "seed": 7}
    (root / "arch.json").write_text(json.dumps(arch), encoding="utf-8")
    assert main(["preprocess", "--schema", str(root / "blobs.json"),
                 "--train-csv", str(root / "blobs.csv"),
                 "--out-dir", str(root / "prep")]) == 0
    assert main(["pretrain", "--config", str(root / "arch.json"),
                 "--data", str(root / "prep" / "train.npz"),
                 "--out", str(root / "enc.npz")]) == 0
    return root


HEAD_FLAGS = ["--task", "binary", "--normal-class", "normal",
              "--epochs", "60", "--lr", "0.05", "--seed", "3"]


@pytest.fixture(scope="module")
def trained_head(workspace):
    head = workspace / "head.npz"
    assert main(["train-head", "--data", str(workspace / "prep" / "train.npz"),
                 "--encoder", str(workspace / "enc.npz"),
                 "--out", str(head)] + HEAD_FLAGS) == 0
    return head


class TestPreprocess:
    def test_artifacts_exist_and_load(self, workspace):
        schema = load_schema(str(workspace / "blobs.json"))
        state = load_state(str(workspace / "prep" / "preprocessor.json"), schema)
        assert state.minima.shape == (16,)
        ds, meta = load_encoded(str(workspace / "prep" / "train.npz"))
        assert ds.width == 16 and len(ds) == 400
        assert meta["schema_fingerprint"] == schema.fingerprint()

    def test_manifest_checksums_match(self, workspace):
        doc = json.loads((workspace / "prep" / "manifest.json").read_text())
        assert doc["command"] == "preprocess"
        for path, digest in {**doc["inputs"], **doc["outputs"]}.items():
            assert sha(path) == digest

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        out = tmp_path / "again"
        for _ in range(2):
            assert main(["preprocess", "--schema", str(workspace / "blobs.json"),
                         "--train-csv", str(workspace / "blobs.csv"),
                         "--out-dir", str(out)]) == 0
        assert sha(out / "train.npz") == sha(workspace / "prep" / "train.npz")

    def test_missing_csv_is_io_error(self, workspace, tmp_path):
        code = main(["preprocess", "--schema", str(workspace / "blobs.json"),
                     "--train-csv", str(tmp_path / "nope.csv"),
                     "--out-dir", str(tmp_path)])
        assert code == 3

    def test_missing_required_flag_is_config_error(self, tmp_path):
        assert main(["preprocess", "--out-dir", str(tmp_path)]) == 2


class TestPretrain:
    def test_history_written_with_holdout(self, workspace):
        history_path = os.path.splitext(str(workspace / "enc.npz"))[0] + "-history.json"
        with open(history_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        history = doc["history"]
        assert [h["epoch"] for h in history] == list(range(12))
        assert all("holdout_loss" in h and h["holdout_loss"] > 0 for h in history)
        assert history[-1]["loss"] < history[0]["loss"]

    def test_checkpoint_loads_with_config(self, workspace):
        encoder, projector, meta = load_encoder(str(workspace / "enc.npz"))
        assert encoder.hidden_dim == 16 and projector.context_dim == 8
        assert meta["contrastive"]["temperature"] == 0.5
        assert meta["contrastive"]["batch_size"] == 16

    def test_zero_epochs_equals_initialization(self, workspace, tmp_path):
        out = tmp_path / "init.npz"
        assert main(["pretrain", "--config", str(workspace / "arch.json"),
                     "--data", str(workspace / "prep" / "train.npz"),
                     "--out", str(out), "--epochs", "0"]) == 0
        encoder, projector, _ = load_encoder(str(out))
        ds, _ = load_encoded(str(workspace / "prep" / "train.npz"))
        from flowcl.model import EncoderConfig, Conv, MaxPool

        config = EncoderConfig((Conv(8), MaxPool(2), Conv(16)), ds.width, 8)
        fresh_enc, fresh_proj = build_encoder(config, seed=7)
        for got, want in zip(encoder.parameters(), fresh_enc.parameters()):
            np.testing.assert_array_equal(got.data, want.data)
        np.testing.assert_array_equal(projector.weight.data, fresh_proj.weight.data)

    def test_unknown_config_key_rejected(self, workspace, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"zzz": 1}', encoding="utf-8")
        assert main(["pretrain", "--config", str(bad),
                     "--data", str(workspace / "prep" / "train.npz"),
                     "--out", str(tmp_path / "e.npz")]) == 2

    def test_oversized_batch_is_data_error(self, workspace, tmp_path):
        assert main(["pretrain", "--config", str(workspace / "arch.json"),
                     "--data", str(workspace / "prep" / "train.npz"),
                     "--out", str(tmp_path / "e.npz"),
                     "--batch-size", "4000", "--epochs", "1"]) == 5

    def test_flag_overrides_config_file(self, workspace, tmp_path):
        out = tmp_path / "short.npz"
        assert main(["pretrain", "--config", str(workspace / "arch.json"),
                     "--data", str(workspace / "prep" / "train.npz"),
                     "--out", str(out), "--epochs", "2"]) == 0
        history_path = os.path.splitext(str(out))[0] + "-history.json"
        with open(history_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        assert len(doc["history"]) == 2


class TestHeadAndEvaluate:
    def test_evaluate_report_shape(self, workspace, trained_head, tmp_path):
        report_path = tmp_path / "report.json"
        assert main(["evaluate", "--data", str(workspace / "prep" / "train.npz"),
                     "--encoder", str(workspace / "enc.npz"),
                     "--head", str(trained_head), "--out", str(report_path)]) == 0
        doc = json.loads((report_path).read_text())
        assert doc["task"] == "binary"
        assert doc["representation"] == "hidden"
        assert doc["train_count"] == 320 and doc["test_count"] == 80
        assert doc["metrics"]["accuracy"] >= 0.95
        assert [row["class"] for row in doc["metrics"]["per_class"]] == ["normal", "attack"]

    def test_evaluate_rerun_byte_identical(self, workspace, trained_head, tmp_path):
        paths = [tmp_path / "r1.json", tmp_path / "r2.json"]
        for p in paths:
            assert main(["evaluate", "--data", str(workspace / "prep" / "train.npz"),
                         "--encoder", str(workspace / "enc.npz"),
                         "--head", str(trained_head), "--out", str(p)]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_tiny_label_fraction_keeps_one_per_class(self, workspace, tmp_path):
        head = tmp_path / "tiny.npz"
        assert main(["train-head", "--data", str(workspace / "prep" / "train.npz"),
                     "--encoder", str(workspace / "enc.npz"), "--out", str(head),
                     "--label-fraction", "0.01"] + HEAD_FLAGS[:-2]) == 0
        from flowcl.model import load_head

        _, meta = load_head(str(head))
        assert meta["train_count"] == 4  # 1% of 160 per class -> 2 each
        assert meta["label_fraction"] == 0.01

    def test_context_representation_round_trip(self, workspace, tmp_path):
        head = tmp_path / "ctx.npz"
        assert main(["train-head", "--data", str(workspace / "prep" / "train.npz"),
                     "--encoder", str(workspace / "enc.npz"), "--out", str(head),
                     "--representation", "context"] + HEAD_FLAGS) == 0
        from flowcl.model import load_head

        loaded, meta = load_head(str(head))
        assert loaded.input_dim == 8
        report_path = tmp_path / "ctx.json"
        assert main(["evaluate", "--data", str(workspace / "prep" / "train.npz"),
                     "--encoder", str(workspace / "enc.npz"),
                     "--head", str(head), "--out", str(report_path)]) == 0
        assert json.loads((report_path).read_text())["representation"] == "context"

    def test_wrong_checkpoint_kind_is_checkpoint_error(self, workspace, trained_head, tmp_path):
        assert main(["evaluate", "--data", str(workspace / "prep" / "train.npz"),
                     "--encoder", str(trained_head),
                     "--head", str(trained_head),
                     "--out", str(tmp_path / "x.json")]) == 7


class TestTransferEval:
    def run_transfer(self, workspace, target_schema, target_csv, out, extra=()):
        return main(["transfer-eval",
                     "--target-csv", str(target_csv),
                     "--target-schema", str(target_schema),
                     "--original-schema", str(workspace / "blobs.json"),
                     "--original-state", str(workspace / "prep" / "preprocessor.json"),
                     "--encoder", str(workspace / "enc.npz"),
                     "--out", str(out)] + list(extra) + HEAD_FLAGS)

    def test_identity_matches_evaluate_metrics_bytes(self, workspace, trained_head, tmp_path):
        eval_path = tmp_path / "eval.json"
        assert main(["evaluate", "--data", str(workspace / "prep" / "train.npz"),
                     "--encoder", str(workspace / "enc.npz"),
                     "--head", str(trained_head), "--out", str(eval_path)]) == 0
        transfer_path = tmp_path / "transfer.json"
        assert self.run_transfer(workspace, workspace / "blobs.json",
                                 workspace / "blobs.csv", transfer_path) == 0
        a = json.loads((eval_path).read_text())["metrics"]
        b = json.loads((transfer_path).read_text())["metrics"]
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
        doc = json.loads((transfer_path).read_text())
        assert doc["alignment"] == {"mapped": 16, "masked": 0, "omitted": 0}

    def test_reduced_schema_reports_masked_count(self, workspace, tmp_path):
        out = tmp_path / "t13.json"
        assert self.run_transfer(workspace, workspace / "target13.json",
                                 workspace / "target13.csv", out) == 0
        doc = json.loads((out).read_text())
        assert doc["alignment"]["masked"] == 3
        assert doc["metrics"]["accuracy"] >= 0.8

    def test_disjoint_schemas_exit_code(self, workspace, tmp_path):
        from flowcl.dataio import DatasetSchema, Feature

        other = DatasetSchema((Feature("zzz", "numeric"),), "label",
                              ("normal", "attack"))
        other_path = tmp_path / "other.json"
        save_schema(str(other_path), other)
        csv_path = tmp_path / "other.csv"
        csv_path.write_text("zzz,label\n1.0,normal\n2.0,attack\n", encoding="utf-8")
        assert self.run_transfer(workspace, other_path, csv_path,
                                 tmp_path / "o.json") == 6

    def test_alias_bridges_renamed_feature(self, workspace, tmp_path):
        schema = load_schema(str(workspace / "blobs.json"))
        renamed = blob_schema(16)
        from flowcl.dataio import DatasetSchema, Feature

        feats = tuple(Feature("feature_00" if f.name == "f00" else f.name, "numeric")
                      for f in renamed.features)
        target = DatasetSchema(feats, "label", ("normal", "attack"))
        target_path = tmp_path / "renamed.json"
        save_schema(str(target_path), target)
        text = (workspace / "blobs.csv").read_text(encoding="utf-8")
        csv_path = tmp_path / "renamed.csv"
        csv_path.write_text(text.replace("f00", "feature_00", 1), encoding="utf-8")
        alias_path = tmp_path / "alias.txt"
        alias_path.write_text("f00 = feature_00\n", encoding="utf-8")
        out = tmp_path / "renamed.json.out"
        assert self.run_transfer(workspace, target_path, csv_path, out,
                                 extra=["--alias", str(alias_path)]) == 0
        doc = json.loads((out).read_text())
        assert doc["alignment"] == {"mapped": 16, "masked": 0, "omitted": 0}
        assert schema.encoded_width == 16


class TestParser:
    def test_bad_subcommand_exits_via_argparse(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2

    def test_bad_choice_exits_via_argparse(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["train-head", "--task", "ternary"])
        assert err.value.code == 2
