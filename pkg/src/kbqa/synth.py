"""Synthetic worlds: random KBs and programs for property tests, and the toy
wine-domain corpus used by the end-to-end training and latency checks."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional

from .kb import (
    DATETIME,
    NUMERIC,
    KnowledgeBase,
    Literal,
    Triple,
    invert,
)
from .sexpr import (
    AND,
    ARGMAX,
    ARGMIN,
    CONS,
    COUNT_FN,
    GE,
    GT,
    JOIN,
    LE,
    LT,
    TC,
    ClassLeaf,
    EntityLeaf,
    FunctionNode,
    LiteralLeaf,
    Program,
    RelationLeaf,
)

# -- random KBs -----------------------------------------------------------------

_REL_KINDS = ("entity", NUMERIC, DATETIME)


def random_literal(rng: random.Random, tag: str) -> Literal:
    if tag == NUMERIC:
        if rng.random() < 0.5:
            return Literal.numeric(str(rng.randint(0, 20)))
        return Literal.numeric(f"{rng.randint(0, 20)}.{rng.randint(0, 9)}")
    year = rng.randint(1990, 2020)
    roll = rng.random()
    if roll < 0.4:
        return Literal.datetime(f"{year}")
    if roll < 0.7:
        return Literal.datetime(f"{year}-{rng.randint(1, 12):02d}")
    return Literal.datetime(f"{year}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}")


def random_kb(
    rng: random.Random,
    n_entities: int = 30,
    n_relations: int = 8,
    n_triples: int = 120,
    n_classes: int = 4,
) -> KnowledgeBase:
    """Random KB; each relation has a fixed object kind (entity or one tag)."""
    entities = [f"ent_{i}" for i in range(n_entities)]
    classes = [f"syn.class_{i}" for i in range(n_classes)]
    kinds = {}
    relations = []
    for i in range(n_relations):
        name = f"syn.rel_{i}"
        relations.append(name)
        kinds[name] = _REL_KINDS[rng.randrange(3)] if i > 1 else "entity"
    triples = []
    for _ in range(n_triples):
        p = rng.choice(relations)
        s = rng.choice(entities)
        if kinds[p] == "entity":
            o = rng.choice(entities)
        else:
            o = random_literal(rng, kinds[p])
        triples.append(Triple(s, p, o))
    assertions = []
    for e in entities:
        for _ in range(rng.randrange(0, 2)):
            assertions.append((e, rng.choice(classes)))
    return KnowledgeBase.from_triples(triples, assertions)


# -- random well-formed programs ---------------------------------------------------


def _relation_pools(kb: KnowledgeBase):
    entity_rels, numeric_rels, datetime_rels = [], [], []
    for r, meta in kb.relation_meta.items():
        if meta.entity_objects:
            entity_rels.append(r)
        if NUMERIC in meta.tag_counts:
            numeric_rels.append(r)
        if DATETIME in meta.tag_counts:
            datetime_rels.append(r)
    return sorted(entity_rels), sorted(numeric_rels), sorted(datetime_rels)


def random_program(rng: random.Random, kb: KnowledgeBase, max_depth: int = 3) -> Program:
    """Well-formed, kind-disciplined program over the KB's symbols.

    Execution may legitimately be empty; that is part of what the executor
    tests need to cover.
    """
    entity_rels, numeric_rels, datetime_rels = _relation_pools(kb)
    literal_rels = sorted(set(numeric_rels) | set(datetime_rels))
    entities = sorted(kb.entities)
    classes = sorted(kb.classes())
    all_rels = sorted(kb.relations())

    def entity_leaf():
        return EntityLeaf(rng.choice(entities))

    def rand_value(relation: Optional[str] = None) -> LiteralLeaf:
        if relation in numeric_rels:
            tag = NUMERIC
        elif relation in datetime_rels:
            tag = DATETIME
        else:
            tag = NUMERIC if rng.random() < 0.5 else DATETIME
        return LiteralLeaf(random_literal(rng, tag))

    def entity_set(depth: int) -> Program:
        if depth <= 0 or rng.random() < 0.25:
            return entity_leaf()
        options = [JOIN]
        if depth >= 1:
            options += [AND]
        if numeric_rels or datetime_rels:
            options += [ARGMAX, ARGMIN, LT, GT, LE, GE]
        if entity_rels or literal_rels:
            options += [CONS]
        if datetime_rels:
            options += [TC]
        func = rng.choice(options)
        if func == JOIN:
            if rng.random() < 0.25 and literal_rels:
                # literal-headed reverse traversal
                r = rng.choice(literal_rels)
                return FunctionNode(JOIN, (rand_value(r), RelationLeaf(invert(r))))
            r = rng.choice(entity_rels) if entity_rels and rng.random() < 0.7 else rng.choice(all_rels)
            direction = invert(r) if rng.random() < 0.4 else r
            if direction in literal_rels:
                direction = invert(direction)
            return FunctionNode(JOIN, (entity_set(depth - 1), RelationLeaf(direction)))
        if func == AND:
            second: Program
            if classes and rng.random() < 0.4:
                second = ClassLeaf(rng.choice(classes))
            else:
                second = entity_set(depth - 1)
            return FunctionNode(AND, (entity_set(depth - 1), second))
        if func in (ARGMAX, ARGMIN):
            r = rng.choice(numeric_rels + datetime_rels)
            return FunctionNode(func, (entity_set(depth - 1), RelationLeaf(r)))
        if func in (LT, LE, GT, GE):
            r = rng.choice(literal_rels)
            return FunctionNode(func, (rand_value(r), RelationLeaf(r)))
        if func == CONS:
            r = rng.choice(all_rels)
            meta = kb.relation_meta[r]
            if meta.entity_objects and (not meta.tag_counts or rng.random() < 0.7):
                const: Program = entity_leaf()
            else:
                tag = meta.literal_tag or NUMERIC
                const = LiteralLeaf(random_literal(rng, tag if tag != "string" else NUMERIC))
            return FunctionNode(CONS, (entity_set(depth - 1), RelationLeaf(r), const))
        # TC
        r = rng.choice(datetime_rels)
        const = LiteralLeaf(random_literal(rng, DATETIME))
        return FunctionNode(TC, (entity_set(depth - 1), RelationLeaf(r), const))

    def literal_set(depth: int) -> Program:
        r = rng.choice(literal_rels)
        return FunctionNode(JOIN, (entity_set(depth - 1), RelationLeaf(r)))

    roll = rng.random()
    if roll < 0.15:
        return FunctionNode(COUNT_FN, (entity_set(max_depth - 1),))
    if roll < 0.25 and literal_rels:
        return literal_set(max_depth)
    return entity_set(max_depth)


# -- toy corpus ---------------------------------------------------------------------

WINE = "wine.wine"
REGION_CLASS = "wine.region"
WINERY_CLASS = "wine.winery"
GRAPE_CLASS = "wine.grape"
STYLE_CLASS = "wine.style"
CRITIC_CLASS = "person.critic"

R_REGION = "wine.wine.region"
R_WINERY = "wine.wine.winery"
R_GRAPE = "wine.wine.grape"
R_STYLE = "wine.wine.style"
R_ALCOHOL = "wine.wine.alcohol_level"
R_RATING = "wine.wine.rating"
R_RELEASE = "wine.wine.release_year"
R_HARVEST = "wine.wine.harvest_date"
R_WINERY_REGION = "wine.winery.region"
R_FOUNDED = "wine.winery.founded"
R_COUNTRY = "wine.region.country"
R_REVIEWED = "person.critic.reviewed"

_REGION_NAMES = [
    "sun_valley", "oak_ridge", "stone_creek", "river_bend", "silver_hills",
    "maple_flats", "cedar_coast", "north_plateau", "golden_basin", "east_terrace",
]
_GRAPE_NAMES = [
    "muscat", "syrah", "verdejo", "malbec", "riesling", "barbera", "grenache", "albarino",
]
_STYLE_NAMES = ["dry", "sweet", "sparkling", "fortified", "rose", "crisp"]
_CRITIC_NAMES = ["ana_silva", "ben_moore", "chloe_reyes", "dan_ito", "eva_krol", "finn_obrien"]
_COUNTRY_NAMES = ["argentina", "chile", "spain", "portugal"]


@dataclass
class ToyExample:
    example_id: str
    question: str
    program_text: str
    entities: list  # (mention, entity_id, score)
    split: str
    template: str


@dataclass
class ToyWorld:
    kb: KnowledgeBase
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    question_words: set = field(default_factory=set)


def build_toy_kb(seed: int = 13, n_wines: int = 60) -> KnowledgeBase:
    rng = random.Random(seed)
    regions = [f"{n}_region" for n in _REGION_NAMES]
    wineries = [f"winery_{n}" for n in ("elm", "fox", "gull", "hart", "iris", "jade")]
    grapes = [f"{g}_grape" for g in _GRAPE_NAMES]
    styles = [f"{s}_style" for s in _STYLE_NAMES]
    critics = list(_CRITIC_NAMES)
    countries = list(_COUNTRY_NAMES)

    triples = []
    assertions = []
    for r in regions:
        assertions.append((r, REGION_CLASS))
        triples.append(Triple(r, R_COUNTRY, rng.choice(countries)))
    for w in wineries:
        assertions.append((w, WINERY_CLASS))
        triples.append(Triple(w, R_WINERY_REGION, rng.choice(regions)))
        triples.append(Triple(w, R_FOUNDED, Literal.datetime(str(rng.randint(1890, 2005)))))
    for g in grapes:
        assertions.append((g, GRAPE_CLASS))
    for s in styles:
        assertions.append((s, STYLE_CLASS))
    for c in critics:
        assertions.append((c, CRITIC_CLASS))

    colors = ["amber", "coral", "ivory", "jasper", "onyx", "pearl", "ruby", "slate"]
    animals = ["crane", "fox", "heron", "ibex", "lynx", "otter", "raven", "wren"]
    wines = []
    for i in range(n_wines):
        w = f"{colors[i % 8]}_{animals[(i // 8) % 8]}_wine"
        if i >= 64:
            w = f"{colors[i % 8]}_{animals[(i // 8) % 8]}_reserve_wine"
        wines.append(w)
        assertions.append((w, WINE))
        triples.append(Triple(w, R_REGION, rng.choice(regions)))
        triples.append(Triple(w, R_WINERY, rng.choice(wineries)))
        triples.append(Triple(w, R_GRAPE, rng.choice(grapes)))
        triples.append(Triple(w, R_STYLE, rng.choice(styles)))
        alcohol = Decimal(rng.randint(80, 155)) / 10
        triples.append(Triple(w, R_ALCOHOL, Literal.numeric(str(alcohol))))
        triples.append(Triple(w, R_RATING, Literal.numeric(str(rng.randint(70, 99)))))
        triples.append(Triple(w, R_RELEASE, Literal.datetime(str(rng.randint(1990, 2020)))))
        if rng.random() < 0.6:
            date = f"{rng.randint(2000, 2020)}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}"
            triples.append(Triple(w, R_HARVEST, Literal.datetime(date)))
    for c in critics:
        for w in rng.sample(wines, rng.randint(4, 9)):
            triples.append(Triple(c, R_REVIEWED, w))
    return KnowledgeBase.from_triples(triples, assertions)


def _mention(entity_id: str) -> str:
    for suffix in ("_region", "_grape", "_style"):
        if entity_id.endswith(suffix):
            return entity_id[: -len(suffix)].replace("_", " ")
    if entity_id.startswith("winery_"):
        return entity_id.replace("_", " ")
    return entity_id.replace("_", " ")


def _templates():
    """(name, split-eligible, text pattern, program pattern, slots).

    Slots: region/grape/style/critic/winery entity ids, num/year/date literal
    text. Program patterns use surface form with {} substitution.
    """
    return [
        ("join_region", "train",
         "which wines come from {region_m}",
         "(JOIN {R_REGION}_inv {region})", ("region",)),
        ("join_of_wine", "train",
         "which region does {wine_m} come from",
         "(JOIN {R_REGION} {wine})", ("wine",)),
        ("join_two_hop", "train",
         "which country is the region of {wine_m} in",
         "(JOIN {R_COUNTRY} (JOIN {R_REGION} {wine}))", ("wine",)),
        ("and_region_grape", "train",
         "which wines from {region_m} use the {grape_m} grape",
         "(AND (JOIN {R_REGION}_inv {region}) (JOIN {R_GRAPE}_inv {grape}))",
         ("region", "grape")),
        ("and_class_reviewed", "train",
         "which wines did the critic {critic_m} review",
         "(AND {WINE} (JOIN {R_REVIEWED} {critic}))", ("critic",)),
        ("count_region", "train",
         "how many wines come from {region_m}",
         "(COUNT (JOIN {R_REGION}_inv {region}))", ("region",)),
        ("argmax_alcohol", "train",
         "which wine from {region_m} has the highest alcohol level",
         "(ARGMAX (JOIN {R_REGION}_inv {region}) {R_ALCOHOL})", ("region",)),
        ("argmin_alcohol", "train",
         "which wine from {region_m} has the lowest alcohol level",
         "(ARGMIN (JOIN {R_REGION}_inv {region}) {R_ALCOHOL})", ("region",)),
        ("gt_alcohol", "train",
         "which wines have an alcohol level greater than {num}",
         "(GT {R_ALCOHOL} {num})", ("num_alcohol",)),
        ("lt_rating", "train",
         "which wines scored a rating below {num}",
         "(LT {R_RATING} {num})", ("num_rating",)),
        ("ge_rating", "train",
         "which wines have a rating of at least {num}",
         "(GE {R_RATING} {num})", ("num_rating",)),
        ("le_release", "train",
         "which wines were released in {year} or earlier",
         "(LE {R_RELEASE} {year})", ("year",)),
        ("cons_style", "train",
         "which wines from {region_m} are {style_m}",
         "(CONS (JOIN {R_REGION}_inv {region}) {R_STYLE} {style})",
         ("region", "style")),
        ("tc_harvest", "train",
         "which wines from {region_m} were harvested on {date}",
         "(TC (JOIN {R_REGION}_inv {region}) {R_HARVEST} {date})",
         ("region", "date")),
        ("count_and", "train",
         "how many wines from {region_m} use the {grape_m} grape",
         "(COUNT (AND (JOIN {R_REGION}_inv {region}) (JOIN {R_GRAPE}_inv {grape})))",
         ("region", "grape")),
        ("join_reverse_critics", "train",
         "which critics reviewed wines from {region_m}",
         "(JOIN {R_REVIEWED}_inv (JOIN {R_REGION}_inv {region}))", ("region",)),
        ("lt_founded", "train",
         "which wineries were founded before {year}",
         "(LT {R_FOUNDED} {year})", ("year_founded",)),
        ("join_literal_head", "train",
         "which wines have an alcohol level of exactly {num}",
         "(JOIN {R_ALCOHOL}_inv {num})", ("num_exact",)),
        ("count_reviewed", "train",
         "how many wines did the critic {critic_m} review",
         "(COUNT (JOIN {R_REVIEWED} {critic}))", ("critic",)),
        ("ge_release", "train",
         "which wines were released in {year} or later",
         "(GE {R_RELEASE} {year})", ("year",)),
        # held-out compositional templates: seen functions and relations in
        # unseen combinations
        ("argmax_rating", "test",
         "which wine from {region_m} has the highest rating",
         "(ARGMAX (JOIN {R_REGION}_inv {region}) {R_RATING})", ("region",)),
        ("count_cons_style", "test",
         "how many wines from {region_m} are {style_m}",
         "(COUNT (CONS (JOIN {R_REGION}_inv {region}) {R_STYLE} {style}))",
         ("region", "style")),
        ("and_region_release", "test",
         "which wines from {region_m} were released in {year} or later",
         "(AND (JOIN {R_REGION}_inv {region}) (GE {R_RELEASE} {year}))",
         ("region", "year")),
        ("critics_of_grape", "test",
         "which critics reviewed wines that use the {grape_m} grape",
         "(JOIN {R_REVIEWED}_inv (JOIN {R_GRAPE}_inv {grape}))", ("grape",)),
        ("argmin_rating", "test",
         "which wine from {region_m} has the lowest rating",
         "(ARGMIN (JOIN {R_REGION}_inv {region}) {R_RATING})", ("region",)),
    ]


_SCHEMA_SUBS = {
    "R_REGION": R_REGION, "R_COUNTRY": R_COUNTRY, "R_GRAPE": R_GRAPE,
    "R_STYLE": R_STYLE, "R_ALCOHOL": R_ALCOHOL, "R_RATING": R_RATING,
    "R_RELEASE": R_RELEASE, "R_HARVEST": R_HARVEST, "R_REVIEWED": R_REVIEWED,
    "R_FOUNDED": R_FOUNDED, "WINE": WINE,
}


def build_toy_corpus(
    seed: int = 13,
    n_train: int = 200,
    n_test: int = 40,
    n_wines: int = 60,
) -> ToyWorld:
    """Deterministic corpus over the toy KB; every gold executes non-empty."""
    from . import sexpr as sx

    kb = build_toy_kb(seed=seed, n_wines=n_wines)
    rng = random.Random(seed + 1)
    symbols = sx.SymbolTable.from_kb(kb)
    world = ToyWorld(kb=kb)

    regions = sorted(e for e in kb.entities if e.endswith("_region"))
    grapes = sorted(e for e in kb.entities if e.endswith("_grape"))
    styles = sorted(e for e in kb.entities if e.endswith("_style"))
    critics = sorted(_CRITIC_NAMES)
    wines = sorted(e for e in kb.entities if e.endswith("_wine"))

    def wines_in(region: str) -> list:
        return sorted(t.subject for t in kb.by_predicate[R_REGION] if t.object == region)

    def fill(template_name, text_pat, prog_pat, slots, counter):
        subs: dict = dict(_SCHEMA_SUBS)
        mentions = []
        for slot in slots:
            if slot == "region":
                e = rng.choice(regions)
                subs["region"], subs["region_m"] = e, _mention(e)
                mentions.append((subs["region_m"], e))
            elif slot == "grape":
                # keep region+grape combinations satisfiable when paired
                pool = grapes
                if "region" in subs:
                    local = {
                        next(iter(kb.spo[w][R_GRAPE])) for w in wines_in(subs["region"])
                    }
                    pool = sorted(local) or grapes
                e = rng.choice(pool)
                subs["grape"], subs["grape_m"] = e, _mention(e)
                mentions.append((subs["grape_m"], e))
            elif slot == "style":
                pool = styles
                if "region" in subs:
                    local = {
                        next(iter(kb.spo[w][R_STYLE])) for w in wines_in(subs["region"])
                    }
                    pool = sorted(local) or styles
                e = rng.choice(pool)
                subs["style"], subs["style_m"] = e, _mention(e)
                # style words are implicit constraints, never linked
            elif slot == "critic":
                e = rng.choice(critics)
                subs["critic"], subs["critic_m"] = e, _mention(e)
                mentions.append((subs["critic_m"], e))
            elif slot == "wine":
                e = rng.choice(wines)
                subs["wine"], subs["wine_m"] = e, _mention(e)
                mentions.append((subs["wine_m"], e))
            elif slot == "num_alcohol":
                subs["num"] = f"{rng.randint(90, 150) / 10:.1f}"
            elif slot == "num_rating":
                subs["num"] = str(rng.randint(72, 97))
            elif slot == "num_exact":
                w = rng.choice(wines)
                value = next(iter(kb.spo[w][R_ALCOHOL]))
                subs["num"] = value.text()
            elif slot == "year":
                subs["year"] = str(rng.randint(1992, 2018))
            elif slot == "year_founded":
                subs["year"] = str(rng.randint(1900, 2000))
            elif slot == "date":
                pool = [x for x in wines if R_HARVEST in kb.spo[x]]
                if "region" in subs:
                    local = [x for x in wines_in(subs["region"]) if R_HARVEST in kb.spo[x]]
                    pool = local or pool
                w = rng.choice(pool)
                subs["date"] = next(iter(kb.spo[w][R_HARVEST])).text()
        question = text_pat.format(**subs)
        program_text = prog_pat.format(**subs)
        program = sx.parse(program_text, symbols)
        denotation = sx.execute(kb, program)
        if denotation.is_empty():
            return None
        return ToyExample(
            example_id=f"{template_name}-{counter:04d}",
            question=question,
            program_text=sx.print_program(program),
            entities=[(m, e, 1.0) for m, e in mentions],
            split="",
            template=template_name,
        )

    train_templates = [t for t in _templates() if t[1] == "train"]
    test_templates = [t for t in _templates() if t[1] == "test"]

    def sample(templates, count, split):
        out = []
        i = 0
        guard = 0
        while len(out) < count:
            guard += 1
            if guard > count * 60:
                raise RuntimeError("toy corpus sampling failed to converge")
            name, _, text_pat, prog_pat, slots = templates[i % len(templates)]
            ex = fill(name, text_pat, prog_pat, slots, len(out))
            i += 1
            if ex is None:
                continue
            ex.split = split
            out.append(ex)
        return out

    world.train = sample(train_templates, n_train, "train")
    world.test = sample(test_templates, n_test, "test")
    for ex in world.train + world.test:
        world.question_words.update(_corpus_words(ex.question))
    return world


def _corpus_words(text: str) -> list:
    from .scorer import tokenize_words

    return tokenize_words(text)


def corpus_vocabulary_words(world: ToyWorld) -> list:
    """All words the toy scorer should have vectors for."""
    from .scorer import name_pieces

    words = set(world.question_words)
    for r in world.kb.relations():
        words.update(name_pieces(r))
    for c in world.kb.classes():
        words.update(name_pieces(c))
    for e in world.kb.entities:
        words.update(name_pieces(e))
    return sorted(words)
