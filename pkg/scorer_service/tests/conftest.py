from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[2]
TOY = ROOT / "data" / "toy"
WINE_KB = ROOT / "data" / "wine_fragment.tsv"


def run_cli(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "kbqa.cli", *[str(a) for a in args]],
        capture_output=True,
        text=True,
        cwd=ROOT,
    )
    if proc.returncode != 0:
        raise RuntimeError(f"engine CLI failed: {proc.stderr}")
    return proc.stdout


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """Small checkpoint trained through the engine CLI (file interfaces only)."""
    tmp = tmp_path_factory.mktemp("tiny")
    dataset = tmp / "train.jsonl"
    records = [
        {
            "id": "a1",
            "question": "which wines come from tulum valley",
            "program": "(JOIN wine.wine.wine_sub_region_inv Tulum_Valley)",
            "entities": [{"mention": "tulum valley", "id": "Tulum_Valley", "score": 1.0}],
            "literals": [],
        },
        {
            "id": "a2",
            "question": "how many wines come from tulum valley",
            "program": "(COUNT (JOIN wine.wine.wine_sub_region_inv Tulum_Valley))",
            "entities": [{"mention": "tulum valley", "id": "Tulum_Valley", "score": 1.0}],
            "literals": [],
        },
    ]
    dataset.write_text("".join(json.dumps(r) + "\n" for r in records))
    embeddings = tmp / "vec.txt"
    words = sorted(
        {"which", "wines", "come", "from", "tulum", "valley", "how", "many",
         "wine", "region", "sub", "percentage", "alcohol"}
    )
    import random

    rng = random.Random(5)
    with open(embeddings, "w") as fh:
        for w in words:
            fh.write(w + " " + " ".join(repr(rng.uniform(-0.5, 0.5)) for _ in range(10)) + "\n")
    ckpt = tmp / "model.npz"
    run_cli(
        "train", "--kb", WINE_KB, "--dataset", dataset, "--embeddings", embeddings,
        "--out", ckpt, "--epochs", "15", "--hidden", "16", "--seed", "2",
    )
    return ckpt


@pytest.fixture(scope="session")
def toy_assets():
    """Full toy corpus + trained engine checkpoint, built via the engine's
    scripts/CLI when not already materialized."""
    if not (TOY / "kb.tsv").exists():
        subprocess.run(
            [sys.executable, str(ROOT / "scripts" / "make_toy_corpus.py")],
            check=True,
            cwd=ROOT,
        )
    if not (TOY / "model.npz").exists():
        run_cli(
            "train", "--kb", TOY / "kb.tsv", "--config", TOY / "config.json",
            "--dataset", TOY / "train.jsonl", "--embeddings", TOY / "embeddings.txt",
            "--out", TOY / "model.npz",
        )
    return TOY
