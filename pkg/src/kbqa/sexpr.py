"""S-expression meaning representation: parse, print, de-nest, execute.

Surface forms follow the published annotation convention (relation written
before the set argument for JOIN and the comparatives); the AST stores one
internal argument order: (set/value expr, relation[, constant]).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from .kb import (
    DATETIME,
    LITERALS,
    NUMERIC,
    Denotation,
    KnowledgeBase,
    Literal,
    LiteralTagError,
    forward_form,
    invert,
)

JOIN = "JOIN"
AND = "AND"
ARGMAX = "ARGMAX"
ARGMIN = "ARGMIN"
LT = "LT"
LE = "LE"
GT = "GT"
GE = "GE"
COUNT_FN = "COUNT"
CONS = "CONS"
TC = "TC"

FUNCTIONS = (JOIN, AND, ARGMAX, ARGMIN, LT, LE, GT, GE, COUNT_FN, CONS, TC)
COMPARATIVES = (LT, LE, GT, GE)
SUPERLATIVES = (ARGMAX, ARGMIN)
COMPARATIVE_OPS = {LT: "lt", LE: "le", GT: "gt", GE: "ge"}


class SexprError(Exception):
    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class ExecutionError(Exception):
    pass


@dataclass(frozen=True)
class EntityLeaf:
    entity: str


@dataclass(frozen=True)
class LiteralLeaf:
    literal: Literal


@dataclass(frozen=True)
class ClassLeaf:
    cls: str


@dataclass(frozen=True)
class RelationLeaf:
    relation: str


@dataclass(frozen=True)
class SubRef:
    index: int  # 1-based position in a subprogram sequence


@dataclass(frozen=True)
class FunctionNode:
    func: str
    args: tuple

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise SexprError(f"unknown function {self.func!r}")


Program = Union[EntityLeaf, LiteralLeaf, ClassLeaf, RelationLeaf, SubRef, FunctionNode]


@dataclass(frozen=True)
class SubprogramSequence:
    """De-nested program: leaves and one-function expressions, #k references."""

    programs: tuple

    def __len__(self):
        return len(self.programs)

    def __iter__(self):
        return iter(self.programs)


# -- symbol table and parsing --------------------------------------------------

_NUMERIC_ATOM = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")
_DATETIME_ATOM = re.compile(r"^\d{4}(?:-\d{2}(?:-\d{2}(?:T\d{2}:\d{2}:\d{2})?)?)?$")
_SUBREF_ATOM = re.compile(r"^#(\d+)$")


@dataclass
class SymbolTable:
    entities: set
    relations: set  # forward relation names; "_inv" accepted on top
    classes: set

    @staticmethod
    def from_kb(kb: KnowledgeBase) -> "SymbolTable":
        return SymbolTable(set(kb.entities), kb.relations(), kb.classes())


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            tokens.append((c, c, i))
            i += 1
        elif c == '"':
            j = i + 1
            buf = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    buf.append(text[j + 1])
                    j += 2
                else:
                    buf.append(text[j])
                    j += 1
            if j >= n:
                raise SexprError("unterminated string literal", i)
            tokens.append(("string", "".join(buf), i))
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(("atom", text[i:j], i))
            i = j
    return tokens


class _Parser:
    def __init__(self, text: str, symbols: SymbolTable, accept_reverse_alias: bool = True):
        self.text = text
        self.symbols = symbols
        self.accept_reverse_alias = accept_reverse_alias
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise SexprError("unexpected end of input", len(self.text))
        self.pos += 1
        return tok

    def parse(self) -> Program:
        program = self.expr()
        if self.peek() is not None:
            kind, value, offset = self.peek()
            raise SexprError(f"trailing input {value!r}", offset)
        return program

    def expr(self) -> Program:
        kind, value, offset = self.take()
        if kind == ")":
            raise SexprError("unexpected ')'", offset)
        if kind == "string":
            return LiteralLeaf(Literal.string(value))
        if kind == "atom":
            return self.classify(value, offset)
        return self.form(offset)

    def form(self, open_offset: int) -> Program:
        kind, head, offset = self.take()
        if kind != "atom":
            raise SexprError("expected a function name after '('", offset)
        func = head.upper()
        if self.accept_reverse_alias and func == "R":
            rel = self.relation_arg()
            self.close(open_offset)
            return RelationLeaf(invert(rel.relation))
        if func not in FUNCTIONS:
            raise SexprError(f"unknown function {head!r}", offset)
        if func == JOIN:
            rel = self.relation_arg()
            u = self.expr()
            node = FunctionNode(JOIN, (u, rel))
        elif func == AND:
            node = FunctionNode(AND, (self.expr(), self.expr()))
        elif func in SUPERLATIVES:
            u = self.expr()
            rel = self.relation_arg()
            node = FunctionNode(func, (u, rel))
        elif func in COMPARATIVES:
            rel = self.relation_arg()
            v = self.expr()
            node = FunctionNode(func, (v, rel))
        elif func == COUNT_FN:
            node = FunctionNode(COUNT_FN, (self.expr(),))
        else:  # CONS / TC
            u = self.expr()
            rel = self.relation_arg()
            c = self.expr()
            node = FunctionNode(func, (u, rel, c))
        self.close(open_offset)
        return node

    def close(self, open_offset: int):
        tok = self.peek()
        if tok is None:
            raise SexprError("unbalanced parentheses", open_offset)
        kind, value, offset = tok
        if kind != ")":
            raise SexprError(f"arity violation: unexpected argument {value!r}", offset)
        self.take()

    def relation_arg(self) -> RelationLeaf:
        kind, value, offset = self.take()
        if kind == "(":
            # nested (R rel) alias in a relation slot
            k2, head, off2 = self.take()
            if k2 != "atom" or head.upper() != "R" or not self.accept_reverse_alias:
                raise SexprError("expected a relation", offset)
            inner = self.relation_arg()
            self.close(offset)
            return RelationLeaf(invert(inner.relation))
        if kind != "atom":
            raise SexprError("expected a relation", offset)
        if forward_form(value) not in self.symbols.relations:
            raise SexprError(f"unknown relation {value!r}", offset)
        return RelationLeaf(value)

    def classify(self, atom: str, offset: int) -> Program:
        m = _SUBREF_ATOM.match(atom)
        if m:
            index = int(m.group(1))
            if index < 1:
                raise SexprError("subprogram references are 1-based", offset)
            return SubRef(index)
        if atom in self.symbols.entities:
            return EntityLeaf(atom)
        if atom in self.symbols.classes:
            return ClassLeaf(atom)
        if forward_form(atom) in self.symbols.relations:
            return RelationLeaf(atom)
        if _DATETIME_ATOM.match(atom):
            return LiteralLeaf(Literal.datetime(atom))
        if _NUMERIC_ATOM.match(atom):
            return LiteralLeaf(Literal.numeric(atom))
        raise SexprError(f"unknown atom {atom!r}", offset)


def parse(text: str, symbols: SymbolTable, accept_reverse_alias: bool = True) -> Program:
    program = _Parser(text, symbols, accept_reverse_alias).parse()
    check(program)
    return program


# -- well-formedness -----------------------------------------------------------

def _is_set_expr(node: Program) -> bool:
    return isinstance(node, (EntityLeaf, SubRef)) or (
        isinstance(node, FunctionNode) and node.func != COUNT_FN
    )


def check(program: Program, top: bool = True) -> None:
    """Arity and argument-shape validation; counts are terminal."""
    if isinstance(node := program, FunctionNode):
        args = node.args
        arity = {COUNT_FN: 1, CONS: 3, TC: 3}.get(node.func, 2)
        if len(args) != arity:
            raise SexprError(f"{node.func} takes {arity} arguments, got {len(args)}")
        if node.func == AND:
            for a in args:
                if not (_is_set_expr(a) or isinstance(a, ClassLeaf)):
                    raise SexprError("AND arguments must be entity sets or a class")
        elif node.func == JOIN:
            # heads may be entities or literals (reverse traversal from a value)
            if not (_is_set_expr(args[0]) or isinstance(args[0], LiteralLeaf)):
                raise SexprError("JOIN first argument must be a set or literal expression")
        elif node.func in COMPARATIVES:
            if not isinstance(args[0], (LiteralLeaf, SubRef, FunctionNode)):
                raise SexprError(f"{node.func} needs a literal value argument")
            if isinstance(args[0], FunctionNode) and args[0].func == COUNT_FN:
                raise SexprError("counts are terminal")
        else:
            if not _is_set_expr(args[0]):
                raise SexprError(f"{node.func} first argument must be a set expression")
        if node.func in (JOIN, *SUPERLATIVES, *COMPARATIVES, CONS, TC):
            if not isinstance(args[1], RelationLeaf):
                raise SexprError(f"{node.func} requires a relation argument")
        if node.func in (CONS, TC):
            c = args[2]
            if not isinstance(c, (EntityLeaf, LiteralLeaf)):
                raise SexprError(f"{node.func} constraint must be an entity or literal")
            if node.func == TC and not (
                isinstance(c, LiteralLeaf) and c.literal.tag == DATETIME
            ):
                raise SexprError("TC constraint must be a datetime literal")
        for a in args:
            if isinstance(a, FunctionNode):
                if a.func == COUNT_FN:
                    raise SexprError("counts are terminal")
                check(a, top=False)
    elif isinstance(program, RelationLeaf) and top:
        raise SexprError("a relation is not a program")


# -- printing ------------------------------------------------------------------

def print_program(program: Program) -> str:
    """Canonical single-space surface form; parse(print_program(p)) == p."""
    if isinstance(program, EntityLeaf):
        return program.entity
    if isinstance(program, ClassLeaf):
        return program.cls
    if isinstance(program, RelationLeaf):
        return program.relation
    if isinstance(program, SubRef):
        return f"#{program.index}"
    if isinstance(program, LiteralLeaf):
        lit = program.literal
        if lit.tag == "string":
            escaped = lit.value.replace("\\", "\\\\").replace('"', '\\"')
            return f'"{escaped}"'
        return lit.text()
    func, args = program.func, program.args
    if func == JOIN:
        parts = [func, print_program(args[1]), print_program(args[0])]
    elif func in COMPARATIVES:
        parts = [func, print_program(args[1]), print_program(args[0])]
    else:
        parts = [func] + [print_program(a) for a in args]
    return "(" + " ".join(parts) + ")"


def normalize(program: Program) -> Program:
    """Canonical form: AND arguments sorted by printed text. Idempotent."""
    if not isinstance(program, FunctionNode):
        return program
    args = tuple(normalize(a) for a in program.args)
    if program.func == AND:
        args = tuple(sorted(args, key=print_program))
    return FunctionNode(program.func, args)


# -- de-nesting ----------------------------------------------------------------

_PROMOTED_SLOTS = {
    JOIN: (0,),
    AND: (0, 1),
    ARGMAX: (0,),
    ARGMIN: (0,),
    LT: (0,),
    LE: (0,),
    GT: (0,),
    GE: (0,),
    COUNT_FN: (0,),
    CONS: (0,),
    TC: (0,),
}


def denest(program: Program) -> SubprogramSequence:
    """Flatten innermost-first; set/value arguments become #k references.

    Entity and literal leaves in those argument slots are promoted to their
    own leading sequence entries, mirroring how decoding seeds its store.
    """
    leaves: list[Program] = []
    body: list[Program] = []
    index_of: dict[str, int] = {}

    def ref_for(entry: Program, leading: bool) -> SubRef:
        key = print_program(entry)
        if key not in index_of:
            if leading:
                leaves.append(entry)
                index_of[key] = -len(leaves)  # patched after the walk
                return SubRef(index_of[key])
            body.append(entry)
            index_of[key] = len(body)
            return SubRef(index_of[key])
        return SubRef(index_of[key])

    def walk(node: Program) -> Program:
        if not isinstance(node, FunctionNode):
            return node
        new_args = []
        for slot, arg in enumerate(node.args):
            promoted = slot in _PROMOTED_SLOTS[node.func]
            if promoted and isinstance(arg, (EntityLeaf, LiteralLeaf)):
                new_args.append(ref_for(arg, leading=True))
            elif isinstance(arg, FunctionNode):
                flat = walk(arg)
                new_args.append(ref_for(flat, leading=False))
            else:
                new_args.append(arg)
        return FunctionNode(node.func, tuple(new_args))

    top = walk(program)
    if isinstance(top, FunctionNode):
        body.append(top)
    else:
        return SubprogramSequence((program,))

    # Leading leaf entries occupy positions 1..L; shift body references up.
    shift = len(leaves)

    def patch(node: Program) -> Program:
        if isinstance(node, SubRef):
            return SubRef(node.index + shift if node.index > 0 else -node.index)
        if isinstance(node, FunctionNode):
            return FunctionNode(node.func, tuple(patch(a) for a in node.args))
        return node

    return SubprogramSequence(tuple(leaves + [patch(p) for p in body]))


def renest(seq: SubprogramSequence) -> Program:
    """Substitute #k references back; inverse of denest."""
    resolved: list[Program] = []

    def subst(node: Program) -> Program:
        if isinstance(node, SubRef):
            if not (1 <= node.index <= len(resolved)):
                raise SexprError(f"#{node.index} references a later subprogram")
            return resolved[node.index - 1]
        if isinstance(node, FunctionNode):
            return FunctionNode(node.func, tuple(subst(a) for a in node.args))
        return node

    for p in seq:
        resolved.append(subst(p))
    if not resolved:
        raise SexprError("empty subprogram sequence")
    return resolved[-1]


# -- execution -----------------------------------------------------------------

def _superlative_key(lit: Literal):
    if lit.tag == NUMERIC:
        return (NUMERIC, lit.value)
    lo, hi = lit._interval()
    return (DATETIME, hi, lo)


def _as_entity_set(d: Denotation, context: str) -> frozenset:
    if d.is_count:
        raise ExecutionError(f"{context}: counts are terminal")
    if d.kind == LITERALS and d.members:
        raise ExecutionError(f"{context}: expected an entity set")
    return d.members


def execute(kb: KnowledgeBase, target) -> Denotation:
    """Evaluate a SubprogramSequence (or a single Program) against the KB.

    Subprogram denotations are memoized for the duration of this call only.
    """
    if isinstance(target, SubprogramSequence):
        memo: list[Denotation] = []
        for p in target:
            memo.append(_eval(kb, p, memo))
        if not memo:
            raise ExecutionError("empty subprogram sequence")
        return memo[-1]
    return _eval(kb, target, [])


def _eval(kb: KnowledgeBase, node: Program, memo: list) -> Denotation:
    if isinstance(node, EntityLeaf):
        if not kb.has_entity(node.entity):
            raise ExecutionError(f"unresolvable entity {node.entity!r}")
        return Denotation.entity_set((node.entity,))
    if isinstance(node, LiteralLeaf):
        return Denotation.literal_set((node.literal,))
    if isinstance(node, ClassLeaf):
        return Denotation.entity_set(kb.class_extension(node.cls))
    if isinstance(node, SubRef):
        if not (1 <= node.index <= len(memo)):
            raise ExecutionError(f"#{node.index} is not an earlier subprogram")
        return memo[node.index - 1]
    if isinstance(node, RelationLeaf):
        raise ExecutionError("a relation is not executable")

    func, args = node.func, node.args
    if func == JOIN:
        u = _eval(kb, args[0], memo)
        if u.is_count:
            raise ExecutionError("JOIN: counts are terminal")
        return kb.join_neighbors(u.members, args[1].relation)
    if func == AND:
        sides = [_eval(kb, a, memo) for a in args]
        members = [_as_entity_set(d, AND) for d in sides]
        return Denotation.entity_set(members[0] & members[1])
    if func in SUPERLATIVES:
        u = _as_entity_set(_eval(kb, args[0], memo), func)
        relation = args[1].relation
        best_key, winners = None, set()
        for e in u:
            values = kb.spo.get(e, {}).get(relation, ())
            for o in values:
                if not isinstance(o, Literal) or o.tag not in (NUMERIC, DATETIME):
                    continue
                key = _superlative_key(o)
                if best_key is not None and key[0] != best_key[0]:
                    raise LiteralTagError(f"{func}: mixed literal tags under {relation}")
                better = best_key is None or (
                    key > best_key if func == ARGMAX else key < best_key
                )
                if better:
                    best_key, winners = key, {e}
                elif key == best_key:
                    winners.add(e)
        return Denotation.entity_set(winners)
    if func in COMPARATIVES:
        v = _eval(kb, args[0], memo)
        if v.is_count or v.kind != LITERALS or len(v.members) != 1:
            raise ExecutionError(f"{func}: value argument must be a single literal")
        value = next(iter(v.members))
        op = COMPARATIVE_OPS[func]
        relation = args[1].relation
        out = set()
        for t in kb.by_predicate.get(relation, ()):
            o = t.object
            if isinstance(o, Literal) and o.tag == value.tag and o.compare(op, value):
                out.add(t.subject)
        return Denotation.entity_set(out)
    if func == COUNT_FN:
        u = _eval(kb, args[0], memo)
        if u.is_count:
            raise ExecutionError("COUNT: counts are terminal")
        return Denotation.of_count(len(u.members))
    # CONS / TC
    u = _as_entity_set(_eval(kb, args[0], memo), func)
    relation, constraint = args[1].relation, args[2]
    if func == TC and not (
        isinstance(constraint, LiteralLeaf) and constraint.literal.tag == DATETIME
    ):
        raise ExecutionError("TC requires a datetime constant")
    tail = constraint.entity if isinstance(constraint, EntityLeaf) else constraint.literal
    out = {e for e in u if tail in kb.spo.get(e, {}).get(relation, ())}
    return Denotation.entity_set(out)
