"""Executable KB question answering: S-expression programs induced by
KB-constrained decoding with a pluggable step scorer."""

from .kb import Denotation, KnowledgeBase, Literal, Triple, load_kb
from .sexpr import (
    Program,
    SubprogramSequence,
    SymbolTable,
    denest,
    execute,
    normalize,
    parse,
    print_program,
    renest,
)
from .induction import (
    AdmissibleSet,
    CapConfig,
    DecodeConfig,
    DecoderState,
    Hypothesis,
    admissible_tokens,
    advance,
    decode,
    derive_gold_tokens,
    enumerate_hypotheses,
    init_state,
)
from .scorer import EmbeddingTable, ScorerConfig, StaticScorer, compile_training_pairs
from .harness import (
    EvalReport,
    Example,
    OracleScorer,
    Vocabulary,
    build_vocabulary,
    evaluate,
    f1_score,
    identify_literals,
    load_dataset,
    validate_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
