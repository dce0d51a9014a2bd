"""Engine + this service over the wire must reproduce in-process decoding
byte for byte on the full synthetic suite."""

import json
import sys

from conftest import run_cli


def _predictions(report_text):
    report = json.loads(report_text)
    return [(row["id"], row["predicted"]) for row in report["per_example"]]


def test_wire_decoding_byte_identical_on_synthetic_suite(toy_assets, tmp_path):
    ckpt = toy_assets / "model.npz"
    service_cmd = f"{sys.executable} -m scorer_service --backend static --checkpoint {ckpt}"
    for split in ("train", "test"):
        dataset = toy_assets / f"{split}.jsonl"
        local = run_cli(
            "eval", "--kb", toy_assets / "kb.tsv", "--config", toy_assets / "config.json",
            "--dataset", dataset, "--checkpoint", ckpt,
        )
        remote = run_cli(
            "eval", "--kb", toy_assets / "kb.tsv", "--config", toy_assets / "config.json",
            "--dataset", dataset, "--scorer-cmd", service_cmd,
        )
        local_pred = _predictions(local)
        remote_pred = _predictions(remote)
        assert local_pred == remote_pred, (
            f"{split}: wire decoding diverged on "
            f"{[a for a, b in zip(local_pred, remote_pred) if a != b][:3]}"
        )
        local_report, remote_report = json.loads(local), json.loads(remote)
        assert local_report["mean_em"] == remote_report["mean_em"]
        assert local_report["mean_f1"] == remote_report["mean_f1"]
