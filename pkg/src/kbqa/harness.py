"""Dataset ingestion, literal identification, vocabulary, metrics, evaluation."""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from . import induction, sexpr
from .induction import DecodeConfig, DecodeStats, Token, decode
from .kb import DATETIME, Denotation, KnowledgeBase, Literal
from .scorer import tokenize_words
from .sexpr import Program, SymbolTable, normalize, parse, print_program


# -- literal identification ------------------------------------------------------

_MONTHS = {
    "january": 1, "february": 2, "march": 3, "april": 4, "may": 5, "june": 6,
    "july": 7, "august": 8, "september": 9, "october": 10, "november": 11,
    "december": 12,
}
_MONTH_ALT = "|".join(m.capitalize() + "|" + m for m in _MONTHS)

_ISO_DATETIME = re.compile(r"\b\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\b")
_ISO_DATE = re.compile(r"\b\d{4}-\d{2}-\d{2}\b(?!T)")
_ISO_YM = re.compile(r"\b\d{4}-\d{2}\b(?!-)")
_MONTH_DAY_YEAR = re.compile(rf"\b(?:{_MONTH_ALT})\s+(\d{{1,2}}),\s*(\d{{4}})\b")
_MONTH_YEAR = re.compile(rf"\b(?:{_MONTH_ALT})\s+(\d{{4}})\b")
_BARE_YEAR = re.compile(r"\b(1\d{3}|2\d{3})\b")
_MAGNITUDE = re.compile(r"\b(\d+(?:\.\d+)?)\s+(thousand|million|billion)\b")
_COMMA_NUMBER = re.compile(r"\b\d{1,3}(?:,\d{3})+(?:\.\d+)?\b")
_PLAIN_NUMBER = re.compile(r"\b\d+(?:\.\d+)?\b")

_MAGNITUDE_FACTOR = {"thousand": 10**3, "million": 10**6, "billion": 10**9}


@dataclass(frozen=True)
class LiteralSpan:
    literal: Literal
    start: int
    end: int


def identify_literals(text: str) -> list:
    """Extract numeric and datetime literals with character spans.

    Deterministic regex passes from most to least specific; earlier matches
    mask their spans from later passes.
    """
    taken = [False] * len(text)
    found: list[LiteralSpan] = []

    def claim(start: int, end: int, literal: Literal) -> None:
        if any(taken[start:end]):
            return
        for i in range(start, end):
            taken[i] = True
        found.append(LiteralSpan(literal, start, end))

    for m in _ISO_DATETIME.finditer(text):
        claim(m.start(), m.end(), Literal.datetime(m.group(0)))
    for m in _ISO_DATE.finditer(text):
        claim(m.start(), m.end(), Literal.datetime(m.group(0)))
    for m in _ISO_YM.finditer(text):
        claim(m.start(), m.end(), Literal.datetime(m.group(0)))
    for m in _MONTH_DAY_YEAR.finditer(text):
        month = _MONTHS[m.group(0).split()[0].lower()]
        day, year = int(m.group(1)), int(m.group(2))
        claim(m.start(), m.end(), Literal.datetime(f"{year:04d}-{month:02d}-{day:02d}"))
    for m in _MONTH_YEAR.finditer(text):
        month = _MONTHS[m.group(0).split()[0].lower()]
        year = int(m.group(1))
        claim(m.start(), m.end(), Literal.datetime(f"{year:04d}-{month:02d}"))
    for m in _BARE_YEAR.finditer(text):
        # skip matches glued to other digits through . , - : (e.g. "3.1415")
        before = text[max(0, m.start() - 2) : m.start()]
        after = text[m.end() : m.end() + 2]
        if len(before) == 2 and before[1] in ".,-:" and before[0].isdigit():
            continue
        if len(after) == 2 and after[0] in ".,-:" and after[1].isdigit():
            continue
        claim(m.start(), m.end(), Literal.datetime(m.group(0)))
    for m in _MAGNITUDE.finditer(text):
        value = str(int(float(m.group(1)) * _MAGNITUDE_FACTOR[m.group(2)]))
        claim(m.start(), m.end(), Literal.numeric(value))
    for m in _COMMA_NUMBER.finditer(text):
        claim(m.start(), m.end(), Literal.numeric(m.group(0).replace(",", "")))
    for m in _PLAIN_NUMBER.finditer(text):
        claim(m.start(), m.end(), Literal.numeric(m.group(0)))
    found.sort(key=lambda s: s.start)
    return found


# -- dataset records ----------------------------------------------------------------

@dataclass
class Example:
    example_id: str
    question: str
    program_text: str
    entities: list  # (mention, entity_id, linker_score)
    literals: list  # Literal values identified in the question
    program: Optional[Program] = None

    @property
    def entity_ids(self) -> list:
        return [e for _, e, _ in self.entities]

    @property
    def entity_scores(self) -> dict:
        return {e: s for _, e, s in self.entities}


def example_to_record(ex: Example) -> dict:
    return {
        "id": ex.example_id,
        "question": ex.question,
        "program": ex.program_text,
        "entities": [
            {"mention": m, "id": e, "score": s} for m, e, s in ex.entities
        ],
        "literals": [
            {"value": lit.text(), "tag": lit.tag} for lit in ex.literals
        ],
    }


def record_to_example(record: dict) -> Example:
    entities = [
        (e.get("mention", ""), e["id"], float(e.get("score", 1.0)))
        for e in record.get("entities", [])
    ]
    literals = [
        Literal.parse(l["value"], l["tag"]) for l in record.get("literals", [])
    ]
    return Example(
        example_id=str(record["id"]),
        question=record["question"],
        program_text=record.get("program", ""),
        entities=entities,
        literals=literals,
    )


def load_dataset(path) -> list:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                examples.append(record_to_example(json.loads(line)))
    return examples


def save_dataset(examples: Iterable[Example], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_record(ex), sort_keys=True) + "\n")


def merge_entity_links(examples: Sequence[Example], path) -> None:
    """Overlay a linker output file: {example_id: [{mention,id,score},...]}."""
    with open(path, encoding="utf-8") as fh:
        links = json.load(fh)
    for ex in examples:
        if ex.example_id in links:
            ex.entities = [
                (e.get("mention", ""), e["id"], float(e.get("score", 1.0)))
                for e in links[ex.example_id]
            ]


@dataclass
class ValidationReport:
    valid: int = 0
    rejected: list = field(default_factory=list)


def validate_dataset(
    examples: Sequence[Example], kb: KnowledgeBase, symbols: Optional[SymbolTable] = None
) -> ValidationReport:
    """Parse every gold program and reject any that execute empty."""
    symbols = symbols or SymbolTable.from_kb(kb)
    report = ValidationReport()
    for ex in examples:
        try:
            ex.program = parse(ex.program_text, symbols)
            denotation = sexpr.execute(kb, ex.program)
            if denotation.is_empty():
                raise sexpr.ExecutionError("gold program executes to an empty denotation")
        except Exception as exc:  # noqa: BLE001 - diagnostics per example
            report.rejected.append((ex.example_id, str(exc)))
            ex.program = None
            continue
        report.valid += 1
    return report


# -- vocabulary ----------------------------------------------------------------------

@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple

    def __len__(self):
        return len(self.tokens)

    def surfaces(self) -> list:
        return [t.surface() for t in self.tokens]


def build_vocabulary(
    kb: KnowledgeBase,
    mode: str = "kb-wide",
    train: Sequence[Example] = (),
) -> Vocabulary:
    """Schema items plus functions, parentheses, and the end marker."""
    tokens = [induction.OPEN_TOKEN, induction.CLOSE_TOKEN]
    tokens.extend(Token(induction.FUNC, f) for f in sexpr.FUNCTIONS)
    if mode == "kb-wide":
        relations = sorted(kb.relations())
        relations += [sexpr.invert(r) for r in relations]
        classes = sorted(kb.classes())
    elif mode == "train-only":
        rel_set, cls_set = set(), set()
        for ex in train:
            program = ex.program
            if program is None:
                continue
            _collect_schema(program, rel_set, cls_set)
        relations, classes = sorted(rel_set), sorted(cls_set)
    else:
        raise ValueError(f"unknown vocabulary mode {mode!r}")
    tokens.extend(Token(induction.RELATION, r) for r in sorted(relations))
    tokens.extend(Token(induction.CLASS, c) for c in classes)
    tokens.append(induction.EOS_TOKEN)
    return Vocabulary(tuple(tokens))


def _collect_schema(node: Program, rels: set, classes: set) -> None:
    if isinstance(node, sexpr.RelationLeaf):
        rels.add(node.relation)
    elif isinstance(node, sexpr.ClassLeaf):
        classes.add(node.cls)
    elif isinstance(node, sexpr.FunctionNode):
        for a in node.args:
            _collect_schema(a, rels, classes)


# -- metrics ------------------------------------------------------------------------

def exact_match(predicted: Optional[Program], gold: Program) -> bool:
    if predicted is None:
        return False
    return normalize(predicted) == normalize(gold)


def _answer_set(d: Denotation) -> frozenset:
    if d.is_count:
        return frozenset({("count", d.count)})
    return d.members


def f1_score(predicted: Optional[Denotation], gold: Denotation) -> float:
    """Harmonic precision/recall over answer sets; counts compare as singletons."""
    if predicted is None:
        return 0.0
    p_set, g_set = _answer_set(predicted), _answer_set(gold)
    if not p_set and not g_set:
        return 1.0
    if not p_set or not g_set:
        return 0.0
    overlap = len(p_set & g_set)
    if overlap == 0:
        return 0.0
    precision = overlap / len(p_set)
    recall = overlap / len(g_set)
    return 2 * precision * recall / (precision + recall)


@dataclass
class ExampleResult:
    example_id: str
    em: bool
    f1: float
    latency_s: float
    predicted_text: Optional[str]
    diagnostics: list = field(default_factory=list)


@dataclass
class EvalReport:
    results: list = field(default_factory=list)
    mean_admissible_size: float = 0.0
    vocabulary_size: int = 0

    @property
    def mean_em(self) -> float:
        return sum(r.em for r in self.results) / len(self.results) if self.results else 0.0

    @property
    def mean_f1(self) -> float:
        return sum(r.f1 for r in self.results) / len(self.results) if self.results else 0.0

    @property
    def mean_latency_s(self) -> float:
        if not self.results:
            return 0.0
        return sum(r.latency_s for r in self.results) / len(self.results)

    def to_dict(self) -> dict:
        return {
            "examples": len(self.results),
            "mean_em": self.mean_em,
            "mean_f1": self.mean_f1,
            "mean_latency_ms": self.mean_latency_s * 1000.0,
            "mean_admissible_size": self.mean_admissible_size,
            "vocabulary_size": self.vocabulary_size,
            "per_example": [
                {
                    "id": r.example_id,
                    "em": int(r.em),
                    "f1": r.f1,
                    "latency_ms": r.latency_s * 1000.0,
                    "predicted": r.predicted_text,
                    "diagnostics": r.diagnostics,
                }
                for r in self.results
            ],
        }


def evaluate(
    scorer_factory: Callable[[], object],
    examples: Sequence[Example],
    kb: KnowledgeBase,
    config: DecodeConfig = DecodeConfig(),
    vocabulary: Optional[Vocabulary] = None,
) -> EvalReport:
    """Decode every example and score EM / denotation F1 / wall-clock latency.

    `scorer_factory` returns the scorer protocol object for one example (a
    gold-token scorer needs per-example construction; a trained model can be
    returned directly each time).
    """
    symbols = SymbolTable.from_kb(kb)
    report = EvalReport(vocabulary_size=len(vocabulary) if vocabulary else 0)
    sizes: list[float] = []
    for ex in examples:
        if ex.program is None:
            ex.program = parse(ex.program_text, symbols)
        gold_denotation = sexpr.execute(kb, ex.program)
        stats = DecodeStats()
        scorer = scorer_factory() if callable(scorer_factory) else scorer_factory
        if hasattr(scorer, "bind_example"):
            scorer.bind_example(ex, kb, config)
        start = time.perf_counter()
        hypotheses = decode(
            tokenize_words(ex.question),
            ex.entity_ids,
            ex.literals,
            scorer,
            kb,
            config,
            entity_scores=ex.entity_scores,
            stats=stats,
        )
        elapsed = time.perf_counter() - start
        sizes.extend(stats.admissible_sizes)
        if hypotheses:
            best = hypotheses[0]
            result = ExampleResult(
                ex.example_id,
                em=exact_match(best.program, ex.program),
                f1=f1_score(best.denotation, gold_denotation),
                latency_s=elapsed,
                predicted_text=print_program(best.program),
                diagnostics=stats.notes,
            )
        else:
            result = ExampleResult(
                ex.example_id, em=False, f1=0.0, latency_s=elapsed,
                predicted_text=None, diagnostics=stats.notes or ["no hypothesis"],
            )
        report.results.append(result)
    report.mean_admissible_size = sum(sizes) / len(sizes) if sizes else 0.0
    return report


class OracleScorer:
    """Evaluation scorer that follows each example's gold token sequence."""

    def __init__(self):
        self._gold: list = []

    def bind_example(self, ex: Example, kb: KnowledgeBase, config: DecodeConfig) -> None:
        state = induction.init_state(kb, ex.entity_ids, ex.literals)
        tokens = induction.derive_gold_tokens(kb, state, ex.program, config.cap)
        self._gold = [
            adm.surfaces()[index]
            for adm, index in induction.replay_tokens(kb, state, tokens, config.cap)
        ]

    def start(self, question_words):
        return (0, tuple(self._gold))

    def score(self, session, surfaces):
        position, gold = session
        log_probs = [-math.inf] * len(surfaces)
        if position < len(gold) and gold[position] in surfaces:
            log_probs[surfaces.index(gold[position])] = 0.0
        return log_probs, session

    def commit(self, session, choice):
        position, gold = session
        return (position + 1, gold)


# -- naive enumerate-and-rank baseline -------------------------------------------------

def enumerate_two_hop(
    kb: KnowledgeBase,
    entities: Sequence[str],
    with_classes: bool = True,
    with_constraints: bool = True,
    max_constraints: Optional[int] = None,
) -> list:
    """One- and two-hop candidate programs around the entities, all executed.

    The candidate family of ranking-style systems: relational chains of
    length <= 2, plus class intersections, entity/value constraints,
    superlatives, and counts. No pruning; everything is executed and only
    faithful candidates are kept.
    """
    candidates: list[tuple[Program, Denotation]] = []
    relations = sorted(kb.relations())
    both = relations + [sexpr.invert(r) for r in relations]
    classes = sorted(kb.classes()) if with_classes else []

    def attach(program: Program, denotation: Denotation) -> None:
        candidates.append((program, denotation))
        if denotation.is_count or denotation.kind != "entities" or not denotation.members:
            return
        for c in classes:
            narrowed = sexpr.FunctionNode(sexpr.AND, (program, sexpr.ClassLeaf(c)))
            dn = _try_execute(kb, narrowed)
            if dn is not None and not dn.is_empty():
                candidates.append((narrowed, dn))
        candidates.append(
            (
                sexpr.FunctionNode(sexpr.COUNT_FN, (program,)),
                Denotation.of_count(len(denotation.members)),
            )
        )
        for r in sorted(kb.numeric_relations(denotation.members)):
            for func in (sexpr.ARGMAX, sexpr.ARGMIN):
                extreme = sexpr.FunctionNode(func, (program, sexpr.RelationLeaf(r)))
                de = _try_execute(kb, extreme)
                if de is not None and not de.is_empty():
                    candidates.append((extreme, de))
        if with_constraints:
            pairs = sorted(
                kb.constraint_pairs(denotation.members),
                key=lambda p: (p[0], p[1] if isinstance(p[1], str) else p[1].text()),
            )
            if max_constraints is not None:
                pairs = pairs[:max_constraints]
            for r, t in pairs:
                leaf = sexpr.EntityLeaf(t) if isinstance(t, str) else sexpr.LiteralLeaf(t)
                constrained = sexpr.FunctionNode(
                    sexpr.CONS, (program, sexpr.RelationLeaf(r), leaf)
                )
                dc = _try_execute(kb, constrained)
                if dc is not None and not dc.is_empty():
                    candidates.append((constrained, dc))

    for e in entities:
        base = sexpr.EntityLeaf(e)
        for r1 in both:
            one_hop = sexpr.FunctionNode(sexpr.JOIN, (base, sexpr.RelationLeaf(r1)))
            d1 = _try_execute(kb, one_hop)
            if d1 is None or d1.is_empty():
                continue
            attach(one_hop, d1)
            if d1.is_count or d1.kind != "entities":
                continue
            for r2 in both:
                two_hop = sexpr.FunctionNode(
                    sexpr.JOIN, (one_hop, sexpr.RelationLeaf(r2))
                )
                d2 = _try_execute(kb, two_hop)
                if d2 is None or d2.is_empty():
                    continue
                attach(two_hop, d2)
    return candidates


def rank_two_hop(
    kb: KnowledgeBase,
    scorer,
    question_words: Sequence[str],
    entities: Sequence[str],
):
    """Enumerate-and-rank baseline: cross-encode every candidate.

    Every candidate is scored with a fresh encoder pass over the question
    joined with the candidate's token pieces, the way ranking systems
    re-encode each question/candidate pair. Returns the best
    (program, denotation, score, n_candidates) or None.
    """
    from .scorer import name_pieces

    candidates = enumerate_two_hop(kb, entities)
    best = None
    for program, denotation in candidates:
        surface = print_program(program)
        joint = list(question_words) + name_pieces(surface)
        encoding, _, _ = scorer.encode(joint)
        rows, _, _ = scorer.token_rows([surface], use_cache=True)
        value = float(rows[0] @ encoding[-1])
        if best is None or value > best[2]:
            best = (program, denotation, value)
    if best is None:
        return None
    return best + (len(candidates),)


def _try_execute(kb: KnowledgeBase, program: Program) -> Optional[Denotation]:
    try:
        return sexpr.execute(kb, program)
    except Exception:  # noqa: BLE001 - enumeration probes arbitrary combinations
        return None
