"""Program induction: KB-constrained bottom-up decoding.

A decoder state holds the emitted token history, a store of executed
subprograms, and a parse context. At every step the admissible tokens are
computed from grammar rules plus KB queries over the stored denotations, so
any token sequence reachable here is well-formed and executes non-empty.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Protocol, Sequence

from .kb import (
    DATETIME,
    ENTITIES,
    LITERALS,
    NUMERIC,
    Denotation,
    KnowledgeBase,
    Literal,
)
from . import sexpr
from .sexpr import (
    AND,
    COMPARATIVE_OPS,
    COMPARATIVES,
    CONS,
    COUNT_FN,
    FUNCTIONS,
    JOIN,
    SUPERLATIVES,
    TC,
    ClassLeaf,
    EntityLeaf,
    FunctionNode,
    LiteralLeaf,
    Program,
    RelationLeaf,
    SubRef,
    print_program,
    renest,
)

EOS_SURFACE = "<eos>"

OPEN = "open"
CLOSE = "close"
EOS = "eos"
FUNC = "func"
SUBREF = "subref"
RELATION = "relation"
CLASS = "class"
ENTITY = "entity"
LITERAL = "literal"


class InductionError(Exception):
    pass


class GoldDerivationError(InductionError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str
    value: object = None

    def surface(self) -> str:
        if self.kind == OPEN:
            return "("
        if self.kind == CLOSE:
            return ")"
        if self.kind == EOS:
            return EOS_SURFACE
        if self.kind == LITERAL:
            return self.value.text()
        if self.kind == SUBREF:
            return f"#{self.value}"
        return str(self.value)

    def __repr__(self):
        return f"Token({self.surface()})"


OPEN_TOKEN = Token(OPEN)
CLOSE_TOKEN = Token(CLOSE)
EOS_TOKEN = Token(EOS)


@dataclass(frozen=True)
class CapConfig:
    """Denotations above max_entities are down-sampled (seeded) before KB queries."""

    max_entities: int = 100
    seed: int = 0


@dataclass(frozen=True)
class DecodeConfig:
    beam_width: int = 5
    max_steps: int = 40
    cap: CapConfig = CapConfig()
    hypothesis_cap: int = 6


@dataclass(frozen=True, eq=False)
class StoreEntry:
    program: Program
    denotation: Denotation
    surface: str = ""  # printed program; what the scorer sees for this #k
    # expansion queries against the KB are pure given (entry, position, cap);
    # states share entry objects, so memoizing here removes repeated KB work
    # across beam items and steps
    cache: dict = field(default_factory=dict, repr=False)


@dataclass(frozen=True, eq=False)
class SubprogramStore:
    entries: tuple
    initial: int  # leading entries seeded from linked entities / literals

    def __len__(self):
        return len(self.entries)

    def entry(self, k: int) -> StoreEntry:
        return self.entries[k - 1]

    def denotation(self, k: int) -> Denotation:
        return self.entries[k - 1].denotation

    @property
    def has_composed(self) -> bool:
        return len(self.entries) > self.initial


# Parse contexts, as tagged tuples:
#   ("outside",)                            between subprograms
#   ("expect_func",)                        after "("
#   ("expect_subref", func)                 after a function name
#   ("expect_arg", func, k)                 after the subref to expand
#   ("expect_const", func, k, relation)     CONS/TC after the relation
#   ("expect_close", func, args)            all arguments consumed
#   ("closed",)                             after <eos>
OUTSIDE = ("outside",)
EXPECT_FUNC = ("expect_func",)
CLOSED = ("closed",)


@dataclass(frozen=True)
class DecoderState:
    history: tuple
    store: SubprogramStore
    context: tuple = OUTSIDE

    @property
    def is_closed(self) -> bool:
        return self.context == CLOSED

    @property
    def step(self) -> int:
        return len(self.history)

    def answer(self) -> Optional[StoreEntry]:
        if not self.store.has_composed:
            return None
        return self.store.entries[-1]


@dataclass(frozen=True)
class AdmissibleSet:
    tokens: tuple
    token_surfaces: tuple = ()

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def surfaces(self) -> list:
        return list(self.token_surfaces)

    def index_of(self, token: Token) -> int:
        return self.tokens.index(token)


def _make_admissible(tokens, store: SubprogramStore) -> AdmissibleSet:
    surfaces = tuple(
        store.entry(t.value).surface if t.kind == SUBREF else t.surface()
        for t in tokens
    )
    return AdmissibleSet(tuple(tokens), surfaces)


def init_state(
    kb: KnowledgeBase,
    entities: Iterable[str],
    literals: Iterable[Literal] = (),
) -> DecoderState:
    """Seed the store with one singleton subprogram per entity and literal."""
    entries = []
    for e in sorted(set(entities)):
        if not kb.has_entity(e):
            raise InductionError(f"unresolvable entity {e!r}")
        entries.append(StoreEntry(EntityLeaf(e), Denotation.entity_set((e,)), e))
    for lit in sorted(set(literals), key=Literal.sort_key):
        entries.append(
            StoreEntry(LiteralLeaf(lit), Denotation.literal_set((lit,)), lit.text())
        )
    store = SubprogramStore(tuple(entries), initial=len(entries))
    return DecoderState(history=(), store=store)


# -- admissible-token computation ------------------------------------------------

def _capped_members(store: SubprogramStore, k: int, cap: CapConfig) -> frozenset:
    members = store.denotation(k).members
    if len(members) <= cap.max_entities:
        return members
    ordered = sorted(members, key=lambda m: m if isinstance(m, str) else m.sort_key())
    rng = random.Random(cap.seed * 1_000_003 + k)
    return frozenset(rng.sample(ordered, cap.max_entities))


def _subref_kind_ok(func: str, d: Denotation) -> bool:
    if d.is_count or d.is_empty():
        return False
    if func == JOIN:
        return d.kind in (ENTITIES, LITERALS)
    if func in COMPARATIVES:
        return d.kind == LITERALS and len(d.members) == 1
    return d.kind == ENTITIES


def _entry_memo(store: SubprogramStore, k: int, cap: CapConfig, key: str, compute):
    cache = store.entry(k).cache
    full_key = (key, k, cap.max_entities, cap.seed)
    if full_key not in cache:
        cache[full_key] = compute()
    return cache[full_key]


def _expansion_tokens(
    state: DecoderState, kb: KnowledgeBase, cap: CapConfig, func: str, k: int
) -> list:
    """Admissible second-argument tokens after `( func #k`, per the rule table."""
    store = state.store

    def heads():
        return _capped_members(store, k, cap)

    if func == JOIN:
        return _entry_memo(
            store, k, cap, "join",
            lambda: [Token(RELATION, r) for r in sorted(kb.outgoing_relations(heads()))],
        )
    if func == AND:
        tokens = []
        for v, entry in enumerate(store.entries, start=1):
            d = entry.denotation
            if d.is_count or d.kind != ENTITIES:
                continue
            if d.members & store.denotation(k).members:
                tokens.append(Token(SUBREF, v))
        tokens.extend(
            _entry_memo(
                store, k, cap, "classes",
                lambda: [Token(CLASS, c) for c in sorted(kb.classes_of(heads()))],
            )
        )
        return tokens
    if func in SUPERLATIVES:
        return _entry_memo(
            store, k, cap, "numeric",
            lambda: [Token(RELATION, r) for r in sorted(kb.numeric_relations(heads()))],
        )
    if func in COMPARATIVES:
        value = next(iter(store.denotation(k).members))
        if value.tag not in (NUMERIC, DATETIME):
            return []
        op = COMPARATIVE_OPS[func]
        return _entry_memo(
            store, k, cap, f"cmp:{op}",
            lambda: [
                Token(RELATION, r) for r in sorted(kb.comparative_relations(value, op))
            ],
        )
    if func in (CONS, TC):
        pairs = _constraint_pairs_memo(store, k, cap, kb, temporal=(func == TC))
        return _entry_memo(
            store, k, cap, "tc_rels" if func == TC else "cons_rels",
            lambda: [Token(RELATION, r) for r in sorted({r for r, _ in pairs})],
        )
    raise InductionError(f"no expansion for {func}")


def _constraint_pairs_memo(
    store: SubprogramStore, k: int, cap: CapConfig, kb: KnowledgeBase, temporal: bool
):
    key = "pairs:tc" if temporal else "pairs"
    return _entry_memo(
        store, k, cap, key,
        lambda: kb.constraint_pairs(_capped_members(store, k, cap), temporal_only=temporal),
    )


def _viable_subrefs(
    state: DecoderState, kb: KnowledgeBase, cap: CapConfig, func: str
) -> list:
    # viability of an entry never changes as the store grows (every rule is a
    # function of that entry alone; AND always has the self-intersection), so
    # the boolean memoizes on the entry itself
    store = state.store
    out = []
    for k, entry in enumerate(store.entries, start=1):
        key = ("viable?", func, k, cap.max_entities, cap.seed)
        verdict = entry.cache.get(key)
        if verdict is None:
            # COUNT closes immediately; AND always admits the self-intersection
            verdict = _subref_kind_ok(func, entry.denotation) and (
                func in (COUNT_FN, AND)
                or bool(_expansion_tokens(state, kb, cap, func, k))
            )
            entry.cache[key] = verdict
        if verdict:
            out.append(Token(SUBREF, k))
    return out


def admissible_tokens(
    state: DecoderState, kb: KnowledgeBase, cap: CapConfig = CapConfig()
) -> AdmissibleSet:
    """Tokens permitted next; every choice keeps a non-empty continuation open."""
    ctx = state.context
    tag = ctx[0]
    store = state.store
    if tag == "closed":
        return _make_admissible((), store)
    if tag == "outside":
        tokens = []
        if any(_viable_subrefs(state, kb, cap, f) for f in FUNCTIONS):
            tokens.append(OPEN_TOKEN)
        if store.has_composed:
            tokens.append(EOS_TOKEN)
        return _make_admissible(tokens, store)
    if tag == "expect_func":
        tokens = [
            Token(FUNC, f) for f in FUNCTIONS if _viable_subrefs(state, kb, cap, f)
        ]
        return _make_admissible(tokens, store)
    if tag == "expect_subref":
        return _make_admissible(_viable_subrefs(state, kb, cap, ctx[1]), store)
    if tag == "expect_arg":
        _, func, k = ctx
        if func == COUNT_FN:
            return _make_admissible((CLOSE_TOKEN,), store)
        return _make_admissible(_expansion_tokens(state, kb, cap, func, k), store)
    if tag == "expect_const":
        _, func, k, relation = ctx
        pairs = _constraint_pairs_memo(store, k, cap, kb, temporal=(func == TC))
        tails = {t for r, t in pairs if r == relation}
        entities = sorted(t for t in tails if isinstance(t, str))
        literals = sorted((t for t in tails if isinstance(t, Literal)), key=Literal.sort_key)
        tokens = [Token(ENTITY, e) for e in entities]
        tokens.extend(Token(LITERAL, lit) for lit in literals)
        return _make_admissible(tokens, store)
    if tag == "expect_close":
        return _make_admissible((CLOSE_TOKEN,), store)
    raise InductionError(f"unknown context {ctx!r}")


# -- state transition -------------------------------------------------------------

def _pending_program(func: str, args: tuple) -> FunctionNode:
    return FunctionNode(func, args)


def advance(
    state: DecoderState,
    token: Token,
    kb: KnowledgeBase,
    cap: CapConfig = CapConfig(),
    admissible: Optional[AdmissibleSet] = None,
) -> DecoderState:
    """Apply one admissible token; on ")" execute and store the subprogram."""
    if admissible is None:
        admissible = admissible_tokens(state, kb, cap)
    if token not in admissible.tokens:
        raise InductionError(f"inadmissible token {token!r} in context {state.context!r}")

    history = state.history + (token,)
    ctx = state.context
    tag = ctx[0]

    if tag == "outside":
        if token.kind == EOS:
            return replace(state, history=history, context=CLOSED)
        return replace(state, history=history, context=EXPECT_FUNC)
    if tag == "expect_func":
        return replace(state, history=history, context=("expect_subref", token.value))
    if tag == "expect_subref":
        func = ctx[1]
        return replace(state, history=history, context=("expect_arg", func, token.value))
    if tag == "expect_arg":
        _, func, k = ctx
        if func == COUNT_FN:
            return _close(state, history, func, (SubRef(k),), kb)
        if func == AND:
            arg2 = SubRef(token.value) if token.kind == SUBREF else ClassLeaf(token.value)
            return replace(
                state, history=history, context=("expect_close", func, (SubRef(k), arg2))
            )
        if func in (CONS, TC):
            return replace(
                state, history=history, context=("expect_const", func, k, token.value)
            )
        args = (SubRef(k), RelationLeaf(token.value))
        return replace(state, history=history, context=("expect_close", func, args))
    if tag == "expect_const":
        _, func, k, relation = ctx
        leaf = (
            EntityLeaf(token.value)
            if token.kind == ENTITY
            else LiteralLeaf(token.value)
        )
        args = (SubRef(k), RelationLeaf(relation), leaf)
        return replace(state, history=history, context=("expect_close", func, args))
    if tag == "expect_close":
        _, func, args = ctx
        return _close(state, history, func, args, kb)
    raise InductionError(f"cannot advance from context {ctx!r}")


def _close(
    state: DecoderState, history: tuple, func: str, args: tuple, kb: KnowledgeBase
) -> DecoderState:
    program = _pending_program(func, args)
    memo = [e.denotation for e in state.store.entries]
    denotation = sexpr._eval(kb, program, memo)
    entries = state.store.entries + (
        StoreEntry(program, denotation, print_program(program)),
    )
    store = SubprogramStore(entries, state.store.initial)
    return DecoderState(history=history, store=store, context=OUTSIDE)


# -- entity hypotheses -------------------------------------------------------------

def enumerate_hypotheses(
    entities: Iterable[str],
    cap: int = 6,
    scores: Optional[dict] = None,
    report: Optional[list] = None,
) -> list:
    """All non-empty subsets, largest first then lexicographic.

    Above `cap` entities, only subsets of the top-cap by linker score are
    enumerated; the truncation is appended to `report` when given.
    """
    pool = sorted(set(entities))
    if len(pool) > cap:
        ranked = sorted(pool, key=lambda e: (-(scores or {}).get(e, 0.0), e))
        kept = ranked[:cap]
        if report is not None:
            report.append(
                f"entity hypotheses truncated: kept top {cap} of {len(pool)} by linker score"
            )
        pool = sorted(kept)
    subsets = []
    for mask in range(1, 1 << len(pool)):
        subsets.append(tuple(pool[i] for i in range(len(pool)) if mask >> i & 1))
    subsets.sort(key=lambda s: (-len(s), s))
    return [frozenset(s) for s in subsets]


# -- scorer protocol ----------------------------------------------------------------

class ScorerProtocol(Protocol):
    """One session per beam item; `commit` never mutates its input session."""

    def start(self, question_words: Sequence[str]) -> object: ...

    def score(self, session: object, surfaces: Sequence[str]) -> tuple: ...
    # returns (log_probs: sequence of float, scored_handle)

    def commit(self, scored_handle: object, choice: int) -> object: ...


class GoldTokenScorer:
    """Puts probability one on a fixed gold token sequence (log 0 / -inf)."""

    def __init__(self, gold_surfaces: Sequence[str]):
        self.gold = list(gold_surfaces)

    def start(self, question_words):
        return 0

    def score(self, position, surfaces):
        log_probs = [-math.inf] * len(surfaces)
        if position < len(self.gold):
            try:
                log_probs[surfaces.index(self.gold[position])] = 0.0
            except ValueError:
                pass
        return log_probs, position

    def commit(self, position, choice):
        return position + 1


# -- decoding ----------------------------------------------------------------------

@dataclass(frozen=True)
class Hypothesis:
    entities: frozenset
    program: Program
    tokens: tuple
    log_prob: float
    score: float  # length-normalized log-probability
    denotation: Denotation


@dataclass
class DecodeStats:
    admissible_sizes: list = field(default_factory=list)
    steps: int = 0
    notes: list = field(default_factory=list)

    @property
    def mean_admissible(self) -> float:
        sizes = self.admissible_sizes
        return sum(sizes) / len(sizes) if sizes else 0.0


def _finish(state: DecoderState, subset: frozenset, log_prob: float) -> Hypothesis:
    entry = state.answer()
    assert entry is not None and not entry.denotation.is_empty(), "unfaithful finish"
    seq = sexpr.SubprogramSequence(tuple(e.program for e in state.store.entries))
    program = renest(seq)
    return Hypothesis(
        entities=subset,
        program=program,
        tokens=state.history,
        log_prob=log_prob,
        score=log_prob / max(1, len(state.history)),
        denotation=entry.denotation,
    )


def decode(
    question_words: Sequence[str],
    entities: Iterable[str],
    literals: Iterable[Literal],
    scorer: ScorerProtocol,
    kb: KnowledgeBase,
    config: DecodeConfig = DecodeConfig(),
    entity_scores: Optional[dict] = None,
    stats: Optional[DecodeStats] = None,
) -> list:
    """Beam-search decode, one pass per entity hypothesis; ranked hypotheses.

    Every returned hypothesis executes to a non-empty denotation. An empty
    list means no finished beam existed within max_steps (a note is added to
    `stats` when given).
    """
    report = stats.notes if stats is not None else None
    finished: list[Hypothesis] = []
    subsets = enumerate_hypotheses(
        entities, cap=config.hypothesis_cap, scores=entity_scores, report=report
    )
    if not subsets:
        # no linked entities: decode once from the identified literals alone
        subsets = [frozenset()]
    for subset in subsets:
        try:
            state0 = init_state(kb, subset, literals)
        except InductionError as exc:
            if report is not None:
                report.append(str(exc))
            continue
        beams = [(state0, scorer.start(question_words), 0.0)]
        done_here = 0
        for _ in range(config.max_steps):
            candidates = []
            for state, session, log_prob in beams:
                adm = admissible_tokens(state, kb, config.cap)
                if stats is not None:
                    stats.admissible_sizes.append(len(adm))
                    stats.steps += 1
                if not len(adm):
                    continue
                log_probs, scored = scorer.score(session, adm.surfaces())
                for idx, token in enumerate(adm.tokens):
                    total = log_prob + log_probs[idx]
                    if total == -math.inf:
                        continue
                    candidates.append((total, idx, token, state, scored, adm))
            if not candidates:
                break
            candidates.sort(key=lambda c: (-c[0], c[1]))
            next_beams = []
            for total, idx, token, state, scored, adm in candidates:
                if len(next_beams) >= config.beam_width:
                    break
                try:
                    new_state = advance(state, token, kb, config.cap, admissible=adm)
                except Exception as exc:  # dirty-data execution failure: drop candidate
                    if report is not None:
                        report.append(f"candidate dropped: {exc}")
                    continue
                if token.kind == EOS:
                    finished.append(_finish(new_state, subset, total))
                    done_here += 1
                else:
                    next_beams.append((new_state, scorer.commit(scored, idx), total))
            beams = next_beams
            if not beams or done_here >= config.beam_width * 2:
                break
    if not finished and report is not None:
        report.append("no finished beam within max_steps")
    best: dict[str, Hypothesis] = {}
    for h in finished:
        key = print_program(sexpr.normalize(h.program))
        if key not in best or h.score > best[key].score:
            best[key] = h
    ranked = sorted(
        best.values(),
        key=lambda h: (-h.score, -len(h.entities), print_program(h.program)),
    )
    return ranked


# -- gold-token derivation -----------------------------------------------------------

def derive_gold_tokens(
    kb: KnowledgeBase,
    state: DecoderState,
    gold: Program,
    cap: CapConfig = CapConfig(),
) -> tuple:
    """Token sequence that reproduces `gold` from the given initial state.

    Raises GoldDerivationError when some gold step is not admissible (for
    example an unlinked entity, or an argument order the grammar cannot emit).
    """
    if not isinstance(gold, FunctionNode):
        raise GoldDerivationError("the answer must be a composed program")

    current = state

    def push(token: Token):
        nonlocal current
        adm = admissible_tokens(current, kb, cap)
        if token not in adm.tokens:
            raise GoldDerivationError(
                f"gold token {token!r} not admissible in context {current.context!r}"
            )
        current = advance(current, token, kb, cap, admissible=adm)

    def find_entry(program: Program) -> Optional[int]:
        key = print_program(program)
        for i, entry in enumerate(current.store.entries, start=1):
            if print_program(entry.program) == key:
                return i
        return None

    def emit(node: Program) -> int:
        existing = find_entry(node)
        if existing is not None:
            return existing
        if isinstance(node, (EntityLeaf, LiteralLeaf)):
            raise GoldDerivationError(f"{print_program(node)} was not linked/identified")
        if not isinstance(node, FunctionNode):
            raise GoldDerivationError(f"cannot emit {print_program(node)} as a subprogram")
        func, args = node.func, node.args

        first = args[0]
        second = args[1] if func == AND else None
        if func == AND and isinstance(first, ClassLeaf):
            # the grammar wants the subref first; AND is commutative
            first, second = second, first
        # compose children before opening this subprogram
        k_first = first.index if isinstance(first, SubRef) else emit(first)
        k_second = None
        if func == AND and not isinstance(second, ClassLeaf):
            k_second = second.index if isinstance(second, SubRef) else emit(second)

        push(OPEN_TOKEN)
        push(Token(FUNC, func))
        push(Token(SUBREF, k_first))
        if func == COUNT_FN:
            pass
        elif func == AND:
            if k_second is None:
                push(Token(CLASS, second.cls))
            else:
                push(Token(SUBREF, k_second))
        else:
            push(Token(RELATION, args[1].relation))
            if func in (CONS, TC):
                c = args[2]
                if isinstance(c, EntityLeaf):
                    push(Token(ENTITY, c.entity))
                else:
                    push(Token(LITERAL, c.literal))
        push(CLOSE_TOKEN)
        return len(current.store)

    emit(gold)
    push(EOS_TOKEN)
    return current.history


def replay_tokens(
    kb: KnowledgeBase,
    state: DecoderState,
    tokens: Sequence[Token],
    cap: CapConfig = CapConfig(),
):
    """Yield (admissible_set, token_index) along a fixed token sequence."""
    for token in tokens:
        adm = admissible_tokens(state, kb, cap)
        yield adm, adm.index_of(token)
        state = advance(state, token, kb, cap, admissible=adm)
