#!/usr/bin/env python3
"""Train the built-in scorer on the toy corpus and evaluate both splits.

Thin wrapper over the CLI so the whole loop is reproducible from files:
    python scripts/make_toy_corpus.py
    python scripts/train_toy.py
"""

import json
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
TOY = ROOT / "data" / "toy"


def run(*args):
    cmd = [sys.executable, "-m", "kbqa.cli", *args]
    print("+", " ".join(str(a) for a in cmd))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(proc.returncode)
    return proc.stdout


def main() -> int:
    if not (TOY / "kb.tsv").exists():
        raise SystemExit("run scripts/make_toy_corpus.py first")
    ckpt = TOY / "model.npz"
    out = run(
        "train",
        "--kb", str(TOY / "kb.tsv"),
        "--config", str(TOY / "config.json"),
        "--dataset", str(TOY / "train.jsonl"),
        "--embeddings", str(TOY / "embeddings.txt"),
        "--out", str(ckpt),
    )
    payload = json.loads(out)
    curve = payload["loss_curve"]
    print(f"trained on {payload['examples']} examples; "
          f"loss {curve[0]:.3f} -> {curve[-1]:.3f} over {len(curve)} epochs")

    for split in ("train", "test"):
        out = run(
            "eval",
            "--kb", str(TOY / "kb.tsv"),
            "--config", str(TOY / "config.json"),
            "--dataset", str(TOY / f"{split}.jsonl"),
            "--checkpoint", str(ckpt),
            "--out", str(TOY / f"report_{split}.json"),
        )
        report = json.loads((TOY / f"report_{split}.json").read_text())
        print(
            f"{split}: EM {report['mean_em']:.3f}  F1 {report['mean_f1']:.3f}  "
            f"latency {report['mean_latency_ms']:.1f} ms  "
            f"mean admissible {report['mean_admissible_size']:.1f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
