#!/usr/bin/env python3
"""Time constrained decoding against the enumerate-and-rank baseline on the
toy corpus (requires data/toy/, see make_toy_corpus.py; trains if needed)."""

import sys
import time
from pathlib import Path

from kbqa.harness import evaluate, load_dataset, rank_two_hop, validate_dataset
from kbqa.induction import DecodeConfig
from kbqa.kb import load_kb
from kbqa.scorer import StaticScorer, tokenize_words

ROOT = Path(__file__).resolve().parent.parent
TOY = ROOT / "data" / "toy"


def main() -> int:
    if not (TOY / "model.npz").exists():
        raise SystemExit("run scripts/train_toy.py first (needs data/toy/model.npz)")
    with open(TOY / "kb.tsv", encoding="utf-8") as fh:
        kb = load_kb(fh)
    examples = load_dataset(TOY / "train.jsonl")
    validate_dataset(examples, kb)
    examples = [ex for ex in examples if ex.program is not None]
    model = StaticScorer.load(TOY / "model.npz")

    rep = evaluate(model, examples, kb, DecodeConfig(beam_width=5))
    decode_ms = rep.mean_latency_s * 1000
    print(f"decode: {decode_ms:.1f} ms/question over {len(examples)} questions "
          f"(EM {rep.mean_em:.3f})")

    with_entities = [ex for ex in examples if ex.entity_ids][:25]
    start = time.perf_counter()
    counts = []
    for ex in with_entities:
        best = rank_two_hop(kb, model, tokenize_words(ex.question), ex.entity_ids)
        counts.append(best[3] if best else 0)
    baseline_ms = (time.perf_counter() - start) / len(with_entities) * 1000
    print(f"enumerate-and-rank: {baseline_ms:.0f} ms/question "
          f"({min(counts)}-{max(counts)} candidates) -> {baseline_ms / decode_ms:.1f}x slower")
    return 0


if __name__ == "__main__":
    sys.exit(main())
