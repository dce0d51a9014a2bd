#!/usr/bin/env python3
"""Materialize the toy wine corpus under data/toy/: KB, train/test splits,
an embedding file covering the corpus words, and a ready-to-use config."""

import argparse
import json
import sys
from pathlib import Path

from kbqa.harness import Example, identify_literals, save_dataset
from kbqa.kb import dump_tsv
from kbqa.scorer import EmbeddingTable
from kbqa.synth import build_toy_corpus, corpus_vocabulary_words


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "toy"))
    parser.add_argument("--seed", type=int, default=13)
    parser.add_argument("--embed-dim", type=int, default=48)
    parser.add_argument("--train", type=int, default=200)
    parser.add_argument("--test", type=int, default=40)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world = build_toy_corpus(seed=args.seed, n_train=args.train, n_test=args.test)

    with open(out / "kb.tsv", "w", encoding="utf-8") as fh:
        dump_tsv(world.kb, fh)

    def to_example(t):
        literals = [s.literal for s in identify_literals(t.question)]
        return Example(t.example_id, t.question, t.program_text, list(t.entities), literals)

    save_dataset([to_example(t) for t in world.train], out / "train.jsonl")
    save_dataset([to_example(t) for t in world.test], out / "test.jsonl")

    words = corpus_vocabulary_words(world)
    EmbeddingTable.random(words, dim=args.embed_dim, seed=args.seed - 8).save(
        out / "embeddings.txt"
    )

    config = {
        "beam_width": 5,
        "max_steps": 40,
        "cap_max_entities": 100,
        "cap_seed": 0,
        "hypothesis_cap": 6,
        "epochs": 30,
        "lr": 3e-3,
        "hidden": 64,
        "seed": 0,
        "freeze_embeddings": True,
        "accumulation": 1,
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {out}/: kb.tsv ({len(world.kb.triples)} triples), "
          f"train.jsonl ({len(world.train)}), test.jsonl ({len(world.test)}), "
          f"embeddings.txt ({len(words)} words), config.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
