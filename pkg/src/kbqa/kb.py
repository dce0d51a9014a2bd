"""In-memory knowledge base: relational triples, class assertions, query indexes.

The store is immutable after load and safe for concurrent readers. Inverse
relations ("r_inv") are a query-time view over the object index, never stored.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Iterator, NamedTuple, Optional, Union

EntityId = str
RelationId = str
ClassId = str

INVERSE_SUFFIX = "_inv"
CLASS_PREDICATE = "type.object.type"

NUMERIC = "numeric"
DATETIME = "datetime"
STRING = "string"
LITERAL_TAGS = (NUMERIC, DATETIME, STRING)


class KBError(Exception):
    pass


class LoadError(KBError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class LiteralTagError(KBError):
    """Ordering comparison attempted across tags or on string literals."""


def is_inverse(relation: RelationId) -> bool:
    return relation.endswith(INVERSE_SUFFIX)


def forward_form(relation: RelationId) -> RelationId:
    return relation[: -len(INVERSE_SUFFIX)] if is_inverse(relation) else relation


def invert(relation: RelationId) -> RelationId:
    if is_inverse(relation):
        return relation[: -len(INVERSE_SUFFIX)]
    return relation + INVERSE_SUFFIX


_DT_PRECISIONS = ("year", "year-month", "date", "datetime")

_DT_RE = re.compile(
    r"^(\d{4})(?:-(\d{2})(?:-(\d{2})(?:[T ](\d{2}):(\d{2}):(\d{2}))?)?)?$"
)


def _canonical_decimal(text: str) -> Decimal:
    value = Decimal(text)
    if not value.is_finite():
        raise InvalidOperation(f"non-finite numeric literal: {text}")
    return value.normalize()


def _format_decimal(value: Decimal) -> str:
    return format(value, "f")


@dataclass(frozen=True)
class Literal:
    """A typed literal value.

    Numeric values are canonical decimals; datetimes carry a precision and
    compare by interval containment (a year is the closed interval of its
    days). Ordering across tags, or on string literals, raises
    LiteralTagError instead of silently returning False.
    """

    tag: str
    value: Union[Decimal, tuple, str]
    precision: Optional[str] = None

    def __post_init__(self):
        if self.tag not in LITERAL_TAGS:
            raise ValueError(f"unknown literal tag: {self.tag!r}")
        if self.tag == DATETIME and self.precision not in _DT_PRECISIONS:
            raise ValueError(f"bad datetime precision: {self.precision!r}")

    @staticmethod
    def numeric(text: Union[str, int, float, Decimal]) -> "Literal":
        return Literal(NUMERIC, _canonical_decimal(str(text)))

    @staticmethod
    def datetime(text: str) -> "Literal":
        m = _DT_RE.match(text.strip())
        if not m:
            raise ValueError(f"unparseable datetime literal: {text!r}")
        parts = tuple(int(g) for g in m.groups() if g is not None)
        precision = {1: "year", 2: "year-month", 3: "date", 6: "datetime"}[len(parts)]
        return Literal(DATETIME, parts, precision)

    @staticmethod
    def string(text: str) -> "Literal":
        return Literal(STRING, text)

    @staticmethod
    def parse(text: str, tag: str) -> "Literal":
        if tag == NUMERIC:
            return Literal.numeric(text)
        if tag == DATETIME:
            return Literal.datetime(text)
        if tag == STRING:
            return Literal.string(text)
        raise ValueError(f"unknown literal tag: {tag!r}")

    def text(self) -> str:
        if self.tag == NUMERIC:
            return _format_decimal(self.value)
        if self.tag == STRING:
            return self.value
        y, *rest = self.value
        if self.precision == "year":
            return f"{y:04d}"
        if self.precision == "year-month":
            return f"{y:04d}-{rest[0]:02d}"
        if self.precision == "date":
            return f"{y:04d}-{rest[0]:02d}-{rest[1]:02d}"
        mo, d, h, mi, s = rest
        return f"{y:04d}-{mo:02d}-{d:02d}T{h:02d}:{mi:02d}:{s:02d}"

    def _interval(self) -> tuple[tuple, tuple]:
        # Closed interval of fully-specified instants covered by this value.
        lo = {"year": (1, 1, 0, 0, 0), "year-month": (1, 0, 0, 0), "date": (0, 0, 0)}
        hi = {
            "year": (12, 31, 23, 59, 59),
            "year-month": (31, 23, 59, 59),
            "date": (23, 59, 59),
        }
        if self.precision == "datetime":
            return self.value, self.value
        return self.value + lo[self.precision], self.value + hi[self.precision]

    def compare(self, op: str, other: "Literal") -> bool:
        """Ordering under tag discipline; op is one of lt/le/gt/ge."""
        if self.tag == STRING or other.tag == STRING:
            raise LiteralTagError("string literals have no order")
        if self.tag != other.tag:
            raise LiteralTagError(f"cannot order {self.tag} against {other.tag}")
        if op in ("gt", "ge"):
            flipped = {"gt": "lt", "ge": "le"}[op]
            return other.compare(flipped, self)
        if self.tag == NUMERIC:
            return self.value < other.value if op == "lt" else self.value <= other.value
        lt = self._interval()[1] < other._interval()[0]
        if op == "lt":
            return lt
        return lt or self == other

    def sort_key(self) -> tuple:
        if self.tag == NUMERIC:
            return (self.tag, str(self.value))
        if self.tag == DATETIME:
            return (self.tag, self.value)
        return (self.tag, self.value)

    def __repr__(self):
        return f"Literal({self.text()}^{self.tag})"


KBObject = Union[EntityId, Literal]


class Triple(NamedTuple):
    subject: EntityId
    predicate: RelationId
    object: KBObject


ENTITIES = "entities"
LITERALS = "literals"
COUNT = "count"


@dataclass(frozen=True, eq=False)
class Denotation:
    """Execution result: a set of entities, a set of literals, or a count."""

    kind: str
    members: frozenset = frozenset()
    count: int = 0

    @staticmethod
    def entity_set(members: Iterable[EntityId]) -> "Denotation":
        return Denotation(ENTITIES, frozenset(members))

    @staticmethod
    def literal_set(members: Iterable[Literal]) -> "Denotation":
        return Denotation(LITERALS, frozenset(members))

    @staticmethod
    def of_count(n: int) -> "Denotation":
        return Denotation(COUNT, frozenset(), n)

    @property
    def is_count(self) -> bool:
        return self.kind == COUNT

    def is_empty(self) -> bool:
        # A count is always a usable answer, even Count(0).
        return not self.is_count and not self.members

    def __eq__(self, other):
        if not isinstance(other, Denotation):
            return NotImplemented
        if self.is_count or other.is_count:
            return self.is_count and other.is_count and self.count == other.count
        return self.members == other.members

    def __hash__(self):
        return hash((self.is_count, self.count if self.is_count else self.members))

    def sorted_members(self) -> list:
        def key(m):
            return (0, m) if isinstance(m, str) else (1,) + m.sort_key()

        return sorted(self.members, key=key)

    def __repr__(self):
        if self.is_count:
            return f"Denotation(count={self.count})"
        return f"Denotation({self.kind}, n={len(self.members)})"


@dataclass
class RelationMeta:
    entity_objects: int = 0
    tag_counts: dict = field(default_factory=dict)
    mixed_tags: bool = False

    @property
    def has_literals(self) -> bool:
        return bool(self.tag_counts)

    @property
    def literal_tag(self) -> Optional[str]:
        if len(self.tag_counts) == 1:
            return next(iter(self.tag_counts))
        return None


class KnowledgeBase:
    """Triple store with subject/object/predicate indexes and class assertions.

    Build through `load_kb` or `KnowledgeBase.from_triples`; do not mutate
    after construction.
    """

    def __init__(self):
        self.triples: list[Triple] = []
        self._triple_set: set[Triple] = set()
        self.class_assertions: dict[EntityId, frozenset] = {}
        self._classes_mut: dict[EntityId, set] = {}
        self.spo: dict[EntityId, dict[RelationId, set]] = {}
        self.ops: dict[KBObject, dict[RelationId, set]] = {}
        self.by_predicate: dict[RelationId, list[Triple]] = {}
        self.class_index: dict[ClassId, set] = {}
        self.relation_meta: dict[RelationId, RelationMeta] = {}
        self.entities: set[EntityId] = set()
        self.warnings: list[str] = []

    @staticmethod
    def from_triples(
        triples: Iterable[Triple],
        class_assertions: Iterable[tuple[EntityId, ClassId]] = (),
    ) -> "KnowledgeBase":
        kb = KnowledgeBase()
        for t in triples:
            kb._add_triple(t)
        for e, c in class_assertions:
            kb._add_class(e, c)
        kb._seal()
        return kb

    def _add_triple(self, t: Triple) -> None:
        if is_inverse(t.predicate):
            raise KBError(f"stored predicate may not carry {INVERSE_SUFFIX!r}: {t.predicate}")
        t = Triple(sys.intern(t.subject), sys.intern(t.predicate), t.object)
        if t in self._triple_set:
            return
        self._triple_set.add(t)
        self.triples.append(t)
        self.spo.setdefault(t.subject, {}).setdefault(t.predicate, set()).add(t.object)
        self.ops.setdefault(t.object, {}).setdefault(t.predicate, set()).add(t.subject)
        self.by_predicate.setdefault(t.predicate, []).append(t)
        meta = self.relation_meta.setdefault(t.predicate, RelationMeta())
        self.entities.add(t.subject)
        if isinstance(t.object, Literal):
            meta.tag_counts[t.object.tag] = meta.tag_counts.get(t.object.tag, 0) + 1
            if len(meta.tag_counts) > 1 and not meta.mixed_tags:
                meta.mixed_tags = True
                self.warnings.append(f"relation {t.predicate} mixes literal tags")
        else:
            meta.entity_objects += 1
            self.entities.add(t.object)

    def _add_class(self, entity: EntityId, cls: ClassId) -> None:
        entity, cls = sys.intern(entity), sys.intern(cls)
        self._classes_mut.setdefault(entity, set()).add(cls)
        self.class_index.setdefault(cls, set()).add(entity)
        self.entities.add(entity)

    def _seal(self) -> None:
        self.class_assertions = {e: frozenset(cs) for e, cs in self._classes_mut.items()}

    # -- queries ------------------------------------------------------------

    def has_entity(self, e: EntityId) -> bool:
        return e in self.entities

    def relations(self) -> set[RelationId]:
        return set(self.by_predicate)

    def classes(self) -> set[ClassId]:
        return set(self.class_index)

    def outgoing_relations(self, heads: Iterable[KBObject]) -> set[RelationId]:
        """All traversable edges from `heads`: forward relations of entity
        heads plus the inverse form of every relation arriving at any head."""
        out: set[RelationId] = set()
        for h in heads:
            if isinstance(h, str):
                out.update(self.spo.get(h, ()))
            incoming = self.ops.get(h)
            if incoming:
                out.update(invert(p) for p in incoming)
        return out

    def join_neighbors(self, heads: Iterable[KBObject], relation: RelationId) -> Denotation:
        """Entities (or literals) reached from any head via `relation`."""
        results: set = set()
        if is_inverse(relation):
            base = forward_form(relation)
            for h in heads:
                by_pred = self.ops.get(h)
                if by_pred and base in by_pred:
                    results.update(by_pred[base])
            return Denotation.entity_set(results)
        for h in heads:
            if not isinstance(h, str):
                continue
            by_pred = self.spo.get(h)
            if by_pred and relation in by_pred:
                results.update(by_pred[relation])
        literals = {r for r in results if isinstance(r, Literal)}
        if literals and len(literals) != len(results):
            raise KBError(f"relation {relation} yields both entities and literals")
        if literals:
            return Denotation.literal_set(literals)
        meta = self.relation_meta.get(relation)
        if not results and meta is not None and meta.has_literals and not meta.entity_objects:
            return Denotation.literal_set(())
        return Denotation.entity_set(results)

    def classes_of(self, entities: Iterable[EntityId]) -> set[ClassId]:
        out: set[ClassId] = set()
        for e in entities:
            out.update(self.class_assertions.get(e, ()))
        return out

    def class_extension(self, cls: ClassId) -> set[EntityId]:
        return set(self.class_index.get(cls, ()))

    def numeric_relations(self, heads: Iterable[EntityId]) -> set[RelationId]:
        """Forward relations of `heads` whose objects are orderable literals."""
        out: set[RelationId] = set()
        for h in heads:
            if not isinstance(h, str):
                continue
            for p, objs in self.spo.get(h, {}).items():
                if p in out:
                    continue
                if any(isinstance(o, Literal) and o.tag in (NUMERIC, DATETIME) for o in objs):
                    out.add(p)
        return out

    def comparative_relations(self, value: Literal, op: str) -> set[RelationId]:
        """Relations holding at least one literal satisfying `t op value`."""
        if value.tag == STRING:
            raise LiteralTagError("comparatives are undefined on string literals")
        out: set[RelationId] = set()
        for p, triples in self.by_predicate.items():
            meta = self.relation_meta[p]
            if value.tag not in meta.tag_counts:
                continue
            for t in triples:
                o = t.object
                if isinstance(o, Literal) and o.tag == value.tag and o.compare(op, value):
                    out.add(p)
                    break
        return out

    def constraint_pairs(
        self, heads: Iterable[EntityId], temporal_only: bool = False
    ) -> set[tuple[RelationId, KBObject]]:
        """(relation, tail) pairs leaving `heads`; optionally datetime tails only."""
        out: set[tuple[RelationId, KBObject]] = set()
        for h in heads:
            if not isinstance(h, str):
                continue
            for p, objs in self.spo.get(h, {}).items():
                for o in objs:
                    if temporal_only and not (isinstance(o, Literal) and o.tag == DATETIME):
                        continue
                    out.add((p, o))
        return out

    def stats(self) -> dict:
        return {
            "triples": len(self.triples),
            "class_assertions": sum(len(v) for v in self.class_assertions.values()),
            "entities": len(self.entities),
            "relations": len(self.by_predicate),
            "classes": len(self.class_index),
            "warnings": list(self.warnings),
        }


# -- loading ------------------------------------------------------------------

_TSV_UNESCAPE = {"\\t": "\t", "\\n": "\n", "\\\\": "\\"}


def _unescape_tsv(field_text: str) -> str:
    if "\\" not in field_text:
        return field_text
    return re.sub(r"\\[tn\\]", lambda m: _TSV_UNESCAPE[m.group(0)], field_text)


def _parse_tsv_object(text: str, line_no: int) -> KBObject:
    if "^" in text:
        value, _, tag = text.rpartition("^")
        if tag in LITERAL_TAGS:
            try:
                return Literal.parse(value, tag)
            except (ValueError, InvalidOperation) as exc:
                raise LoadError(str(exc), line_no) from exc
    return text


_NT_RE = re.compile(
    r'^<([^<>\s]+)>\s+<([^<>\s]+)>\s+(?:<([^<>\s]+)>|"((?:[^"\\]|\\.)*)"\^\^(\w+))\s*\.$'
)


def _iter_records(stream, fmt: str) -> Iterator[tuple[int, EntityId, RelationId, KBObject]]:
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if fmt == "triples-tsv":
            fields = line.split("\t")
            if len(fields) != 3:
                raise LoadError(f"expected 3 tab-separated fields, got {len(fields)}", line_no)
            s, p, o_text = (_unescape_tsv(f) for f in fields)
            if not s or not p or not o_text:
                raise LoadError("empty field", line_no)
            yield line_no, s, p, _parse_tsv_object(o_text, line_no)
        elif fmt == "n-triples-subset":
            m = _NT_RE.match(line.strip())
            if not m:
                raise LoadError(f"unparseable record: {line.strip()!r}", line_no)
            s, p, o_ent, o_val, o_tag = m.groups()
            if o_ent is not None:
                yield line_no, s, p, o_ent
            else:
                if o_tag not in LITERAL_TAGS:
                    raise LoadError(f"unknown literal tag {o_tag!r}", line_no)
                try:
                    unescaped = o_val.replace('\\"', '"').replace("\\\\", "\\")
                    yield line_no, s, p, Literal.parse(unescaped, o_tag)
                except (ValueError, InvalidOperation) as exc:
                    raise LoadError(str(exc), line_no) from exc
        else:
            raise ValueError(f"unknown format: {fmt!r}")


def _escape_tsv(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def dump_tsv(kb: KnowledgeBase, fh) -> None:
    """Serialize in the triples-tsv format; load_kb(dump_tsv(kb)) == kb."""
    for t in kb.triples:
        if isinstance(t.object, Literal):
            obj = f"{_escape_tsv(t.object.text())}^{t.object.tag}"
        else:
            obj = _escape_tsv(t.object)
        fh.write(f"{_escape_tsv(t.subject)}\t{_escape_tsv(t.predicate)}\t{obj}\n")
    for e in sorted(kb.class_assertions):
        for c in sorted(kb.class_assertions[e]):
            fh.write(f"{_escape_tsv(e)}\t{CLASS_PREDICATE}\t{_escape_tsv(c)}\n")


def load_kb(stream, fmt: str = "triples-tsv") -> KnowledgeBase:
    """Load a knowledge base from a text stream.

    Class assertions ride the reserved predicate `type.object.type` and are
    kept apart from the relational triples.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = stream.decode("utf-8").splitlines(keepends=True)
    elif isinstance(stream, str):
        stream = stream.splitlines(keepends=True)
    kb = KnowledgeBase()
    for line_no, s, p, o in _iter_records(stream, fmt):
        if p == CLASS_PREDICATE:
            if isinstance(o, Literal):
                raise LoadError("class assertion object must be a class id", line_no)
            kb._add_class(s, o)
        else:
            if is_inverse(p):
                raise LoadError(f"stored predicate may not end with {INVERSE_SUFFIX!r}", line_no)
            kb._add_triple(Triple(s, p, o))
    kb._seal()
    return kb
