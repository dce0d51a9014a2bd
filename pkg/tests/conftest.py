from __future__ import annotations

import random
from pathlib import Path

import pytest
from hypothesis import settings

# property tests share a machine with training runs; wall-clock deadlines
# would only add flakiness
settings.register_profile("suite", deadline=None)
settings.load_profile("suite")

from kbqa.harness import Example, identify_literals
from kbqa.induction import CapConfig
from kbqa.kb import load_kb
from kbqa.scorer import (
    EmbeddingTable,
    ScorerConfig,
    StaticScorer,
    compile_training_pairs,
    tokenize_words,
)
from kbqa.sexpr import SymbolTable, parse
from kbqa.synth import build_toy_corpus, corpus_vocabulary_words

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

# cap large enough that sampling never kicks in on desk-scale KBs; the
# sampling path has its own dedicated tests
NO_CAP = CapConfig(max_entities=10**9, seed=0)

TOY_SEED = 13
TRAIN_LR = 3e-3
TRAIN_EPOCHS = 30
EMBED_DIM = 48


def load_fragment(name: str):
    with open(DATA_DIR / name, encoding="utf-8") as fh:
        return load_kb(fh)


@pytest.fixture(scope="session")
def wine_kb():
    return load_fragment("wine_fragment.tsv")


@pytest.fixture(scope="session")
def people_kb():
    return load_fragment("people_fragment.tsv")


@pytest.fixture(scope="session")
def toy_world():
    return build_toy_corpus(seed=TOY_SEED)


def toy_to_examples(world, split):
    symbols = SymbolTable.from_kb(world.kb)
    out = []
    for t in getattr(world, split):
        literals = [s.literal for s in identify_literals(t.question)]
        ex = Example(t.example_id, t.question, t.program_text, list(t.entities), literals)
        ex.program = parse(t.program_text, symbols)
        out.append(ex)
    return out


@pytest.fixture(scope="session")
def toy_examples(toy_world):
    return toy_to_examples(toy_world, "train"), toy_to_examples(toy_world, "test")


@pytest.fixture(scope="session")
def toy_table(toy_world):
    return EmbeddingTable.random(corpus_vocabulary_words(toy_world), dim=EMBED_DIM, seed=5)


@pytest.fixture(scope="session")
def trained_model(toy_world, toy_examples, toy_table):
    """Scorer trained on the toy corpus once per session (about half a minute)."""
    train, _ = toy_examples
    model = StaticScorer(
        toy_table, ScorerConfig(hidden=64, seed=0, lr=TRAIN_LR, epochs=TRAIN_EPOCHS)
    )
    pairs = [
        (ex.example_id, tokenize_words(ex.question), ex.program, ex.entity_ids, ex.literals)
        for ex in train
    ]
    compiled = compile_training_pairs(toy_world.kb, pairs)
    assert len(compiled) == len(train), "every toy gold sequence must be derivable"
    curve = model.train(compiled)
    model.loss_curve = curve
    return model


@pytest.fixture()
def rng():
    return random.Random(0xC0FFEE)
