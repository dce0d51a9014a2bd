"""Command line: load-kb, parse, execute, train, eval, answer."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness, induction, sexpr
from .harness import (
    OracleScorer,
    build_vocabulary,
    identify_literals,
    load_dataset,
    validate_dataset,
)
from .induction import CapConfig, DecodeConfig
from .kb import load_kb
from .scorer import (
    CompileReport,
    EmbeddingTable,
    ScorerConfig,
    StaticScorer,
    compile_training_pairs,
    tokenize_words,
)
from .sexpr import SymbolTable, execute, parse, print_program

DECODE_KEYS = ("beam_width", "max_steps", "cap_max_entities", "cap_seed", "hypothesis_cap")
TRAIN_KEYS = ("epochs", "lr", "hidden", "seed", "freeze_embeddings", "accumulation")


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _decode_config(args, config: dict) -> DecodeConfig:
    def pick(key, default):
        flag = getattr(args, key, None)
        if flag is not None:
            return flag
        return config.get(key, default)

    return DecodeConfig(
        beam_width=int(pick("beam_width", 5)),
        max_steps=int(pick("max_steps", 40)),
        cap=CapConfig(
            max_entities=int(pick("cap_max_entities", 100)),
            seed=int(pick("cap_seed", 0)),
        ),
        hypothesis_cap=int(pick("hypothesis_cap", 6)),
    )


def _open_kb(args):
    with open(args.kb, encoding="utf-8") as fh:
        return load_kb(fh, args.kb_format)


def _fail(message: str, **extra) -> int:
    record = {"error": message}
    record.update(extra)
    print(json.dumps(record), file=sys.stderr)
    return 1


def _scorer_for(args, kb):
    if getattr(args, "scorer_cmd", None):
        from .remote import RemoteScorer

        return RemoteScorer(args.scorer_cmd)
    if getattr(args, "checkpoint", None):
        return StaticScorer.load(args.checkpoint)
    return OracleScorer()


def cmd_load_kb(args) -> int:
    kb = _open_kb(args)
    print(json.dumps(kb.stats(), indent=2, sort_keys=True))
    return 0


def cmd_parse(args) -> int:
    kb = _open_kb(args)
    program = parse(args.program, SymbolTable.from_kb(kb))
    print(print_program(sexpr.normalize(program) if args.normalize else program))
    return 0


def cmd_execute(args) -> int:
    kb = _open_kb(args)
    program = parse(args.program, SymbolTable.from_kb(kb))
    denotation = execute(kb, program)
    if denotation.is_count:
        print(json.dumps({"count": denotation.count}))
    else:
        members = [
            m if isinstance(m, str) else {"value": m.text(), "tag": m.tag}
            for m in denotation.sorted_members()
        ]
        print(json.dumps({"kind": denotation.kind, "members": members}))
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    kb = _open_kb(args)
    examples = load_dataset(args.dataset)
    report = validate_dataset(examples, kb)
    if report.rejected:
        print(
            json.dumps({"rejected_examples": report.rejected}),
            file=sys.stderr,
        )
    table = EmbeddingTable.load(args.embeddings)

    def pick(key, default):
        flag = getattr(args, key, None)
        return flag if flag is not None else config.get(key, default)

    scfg = ScorerConfig(
        hidden=int(pick("hidden", 64)),
        seed=int(pick("seed", 0)),
        lr=float(pick("lr", 1e-3)),
        epochs=int(pick("epochs", 30)),
        freeze_embeddings=bool(pick("freeze_embeddings", True)),
        accumulation=int(pick("accumulation", 1)),
    )
    scorer = StaticScorer(table, scfg)
    cap = _decode_config(args, config).cap
    compile_report = CompileReport()
    pairs = [
        (ex.example_id, tokenize_words(ex.question), ex.program, ex.entity_ids, ex.literals)
        for ex in examples
        if ex.program is not None
    ]
    compiled = compile_training_pairs(kb, pairs, cap, compile_report)
    curve = scorer.train(compiled)
    scorer.save(args.out)
    print(
        json.dumps(
            {
                "checkpoint": args.out,
                "examples": compile_report.compiled,
                "skipped": compile_report.skipped,
                "loss_curve": curve,
            }
        )
    )
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    kb = _open_kb(args)
    examples = load_dataset(args.dataset)
    validation = validate_dataset(examples, kb)
    examples = [ex for ex in examples if ex.program is not None]
    scorer = _scorer_for(args, kb)
    vocabulary = build_vocabulary(kb, "kb-wide")
    decode_config = _decode_config(args, config)
    report = harness.evaluate(scorer, examples, kb, decode_config, vocabulary)
    payload = report.to_dict()
    payload["rejected_examples"] = validation.rejected
    text = json.dumps(payload, indent=2 if args.pretty else None, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if hasattr(scorer, "close"):
        scorer.close()
    return 0


def cmd_answer(args) -> int:
    config = _load_config(args.config)
    kb = _open_kb(args)
    if not args.checkpoint and not args.scorer_cmd:
        return _fail("answer requires --checkpoint or --scorer-cmd")
    scorer = _scorer_for(args, kb)
    entities = []
    scores = {}
    for spec in args.entity or []:
        entity_id, _, score = spec.partition(":")
        entities.append(entity_id)
        scores[entity_id] = float(score) if score else 1.0
    literals = [span.literal for span in identify_literals(args.question)]
    stats = induction.DecodeStats()
    hypotheses = induction.decode(
        tokenize_words(args.question),
        entities,
        literals,
        scorer,
        kb,
        _decode_config(args, config),
        entity_scores=scores,
        stats=stats,
    )
    out = []
    for h in hypotheses[: args.top]:
        denotation = (
            {"count": h.denotation.count}
            if h.denotation.is_count
            else {
                "members": [
                    m if isinstance(m, str) else {"value": m.text(), "tag": m.tag}
                    for m in h.denotation.sorted_members()
                ]
            }
        )
        out.append(
            {
                "program": print_program(h.program),
                "score": h.score,
                "entities": sorted(h.entities),
                "denotation": denotation,
            }
        )
    print(json.dumps({"hypotheses": out, "notes": stats.notes}))
    if hasattr(scorer, "close"):
        scorer.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbqa")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_kb(p):
        p.add_argument("--kb", required=True, help="knowledge base file")
        p.add_argument(
            "--kb-format",
            default="triples-tsv",
            choices=["triples-tsv", "n-triples-subset"],
        )
        p.add_argument("--config", default=None, help="JSON config file")

    def add_decode_flags(p):
        p.add_argument("--beam-width", dest="beam_width", type=int)
        p.add_argument("--max-steps", dest="max_steps", type=int)
        p.add_argument("--cap-max-entities", dest="cap_max_entities", type=int)
        p.add_argument("--cap-seed", dest="cap_seed", type=int)
        p.add_argument("--hypothesis-cap", dest="hypothesis_cap", type=int)

    p = sub.add_parser("load-kb", help="validate a KB file and print statistics")
    add_kb(p)
    p.set_defaults(func=cmd_load_kb)

    p = sub.add_parser("parse", help="parse a program and print its canonical form")
    add_kb(p)
    p.add_argument("program")
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("execute", help="execute a program against the KB")
    add_kb(p)
    p.add_argument("program")
    p.set_defaults(func=cmd_execute)

    p = sub.add_parser("train", help="train the built-in scorer")
    add_kb(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--accumulation", type=int)
    add_decode_flags(p)
    p.set_defaults(func=cmd_train, freeze_embeddings=None)

    p = sub.add_parser("eval", help="evaluate EM/F1/latency over a dataset")
    add_kb(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--scorer-cmd", dest="scorer_cmd", help="external scorer command")
    p.add_argument("--out")
    p.add_argument("--pretty", action="store_true")
    add_decode_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("answer", help="answer one question")
    add_kb(p)
    p.add_argument("--question", required=True)
    p.add_argument("--entity", action="append", help="linked entity id[:score]")
    p.add_argument("--checkpoint")
    p.add_argument("--scorer-cmd", dest="scorer_cmd")
    p.add_argument("--top", type=int, default=5)
    add_decode_flags(p)
    p.set_defaults(func=cmd_answer)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        return _fail(str(exc), type=type(exc).__name__)


if __name__ == "__main__":
    sys.exit(main())
