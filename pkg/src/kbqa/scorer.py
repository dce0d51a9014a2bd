"""Built-in step scorer: frozen word vectors, LSTM question encoder, LSTM
decoder with attention, softmax over the embeddings of the admissible tokens.

All math is float64 numpy; gradients are hand-written reverse mode and are
checked against central finite differences in the test suite.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import induction
from .induction import EOS_SURFACE, derive_gold_tokens, init_state
from .kb import KnowledgeBase
from .sexpr import FUNCTIONS

SPECIAL_SURFACES = ("(", ")", EOS_SURFACE) + FUNCTIONS

_WORD_RE = re.compile(r"[A-Za-z]+|\d+(?:\.\d+)?")
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def tokenize_words(text: str) -> list:
    """Question/word tokenizer: lowercase alphabetic runs and numbers."""
    return _WORD_RE.findall(text.lower())


def name_pieces(surface: str) -> list:
    """Schema-item name pieces: split on dots, underscores, camel boundaries."""
    return tokenize_words(_CAMEL_RE.sub(" ", surface))


class EmbeddingTable:
    """Word-vector table with a dedicated out-of-vocabulary fallback row."""

    def __init__(self, words: Sequence[str], vectors: np.ndarray):
        assert len(words) == vectors.shape[0]
        self.words = list(words)
        self.index = {w: i for i, w in enumerate(self.words)}
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.dim = self.vectors.shape[1] if self.vectors.size else 0

    @staticmethod
    def load(path) -> "EmbeddingTable":
        words, rows, seen = [], [], set()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2 or parts[0] in seen:
                    continue
                seen.add(parts[0])
                words.append(parts[0])
                rows.append([float(v) for v in parts[1:]])
        return EmbeddingTable(words, np.array(rows, dtype=np.float64))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for word, row in zip(self.words, self.vectors):
                fh.write(word + " " + " ".join(repr(float(v)) for v in row) + "\n")

    @staticmethod
    def random(words: Sequence[str], dim: int, seed: int = 0) -> "EmbeddingTable":
        rng = np.random.default_rng(seed)
        vectors = rng.uniform(-0.5, 0.5, size=(len(words), dim))
        return EmbeddingTable(list(words), vectors)


@dataclass
class ScorerConfig:
    hidden: int = 64
    seed: int = 0
    lr: float = 1e-3
    epochs: int = 30
    freeze_embeddings: bool = True
    accumulation: int = 1
    init_scale: float = 0.08


@dataclass(frozen=True)
class Session:
    encoding: np.ndarray  # (|q|, hidden), shared read-only
    h: np.ndarray
    m: np.ndarray
    c: np.ndarray  # (2*hidden,) next decoder input


@dataclass(frozen=True)
class ScoredStep:
    session: Session
    h_new: np.ndarray
    m_new: np.ndarray
    token_rows: np.ndarray  # (m, hidden)


@dataclass
class StepSample:
    surfaces: list
    gold_index: int


@dataclass
class CompiledExample:
    example_id: str
    question: list
    steps: list


def _lstm_forward(W, b, x, h_prev, m_prev):
    hid = h_prev.shape[0]
    z = W @ np.concatenate([x, h_prev]) + b
    i = _sigmoid(z[:hid])
    f = _sigmoid(z[hid : 2 * hid])
    g = np.tanh(z[2 * hid : 3 * hid])
    o = _sigmoid(z[3 * hid :])
    m = f * m_prev + i * g
    h = o * np.tanh(m)
    return h, m, (x, h_prev, m_prev, i, f, g, o, m)


def _lstm_backward(W, cache, dh, dm):
    x, h_prev, m_prev, i, f, g, o, m = cache
    tanh_m = np.tanh(m)
    do = dh * tanh_m
    dm_total = dm + dh * o * (1.0 - tanh_m**2)
    di = dm_total * g
    df = dm_total * m_prev
    dg = dm_total * i
    dz = np.concatenate(
        [di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)]
    )
    inp = np.concatenate([x, h_prev])
    dW = np.outer(dz, inp)
    db = dz
    dinp = W.T @ dz
    dx = dinp[: x.shape[0]]
    dh_prev = dinp[x.shape[0] :]
    dm_prev = dm_total * f
    return dW, db, dx, dh_prev, dm_prev


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(x):
    shifted = x - np.max(x)
    ex = np.exp(shifted)
    return ex / ex.sum()


def _log_softmax(x):
    shifted = x - np.max(x)
    return shifted - np.log(np.exp(shifted).sum())


class StaticScorer:
    """Scorer over static word embeddings, implementing the decode protocol."""

    def __init__(self, table: EmbeddingTable, config: ScorerConfig = ScorerConfig()):
        self.config = config
        self.words = list(table.words)
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.special_index = {s: i for i, s in enumerate(SPECIAL_SURFACES)}
        dw, hid = table.dim, config.hidden
        rng = np.random.default_rng(config.seed)
        s = config.init_scale

        def init(*shape):
            return rng.uniform(-s, s, size=shape)

        self.params = {
            "word_vecs": table.vectors.copy(),
            "oov_vec": np.zeros(dw),
            "special_vecs": init(len(SPECIAL_SURFACES), dw),
            "enc_W": init(4 * hid, dw + hid),
            "enc_b": np.zeros(4 * hid),
            "dec_W": init(4 * hid, 3 * hid),
            "dec_b": np.zeros(4 * hid),
            "proj_W": init(dw, hid),
            "proj_b": np.zeros(hid),
        }
        self.dim_words = dw
        self.hidden = hid
        self._mean_cache: dict = {}

    # -- embedding -------------------------------------------------------------

    def _piece_refs(self, surface: str) -> list:
        if surface in self.special_index:
            return [("special", self.special_index[surface])]
        refs = []
        for piece in name_pieces(surface):
            idx = self.word_index.get(piece)
            refs.append(("word", idx) if idx is not None else ("oov", 0))
        return refs or [("oov", 0)]

    def _ref_vec(self, ref) -> np.ndarray:
        kind, idx = ref
        if kind == "word":
            return self.params["word_vecs"][idx]
        if kind == "special":
            return self.params["special_vecs"][idx]
        return self.params["oov_vec"]

    def mean_vectors(self, surfaces: Sequence[str], use_cache: bool = False):
        """Mean word vector per surface plus the scatter map for backprop.

        The cache is only sound while parameters are fixed, so the training
        and gradient paths never pass use_cache.
        """
        rows = np.empty((len(surfaces), self.dim_words))
        backmap = []
        for r, surface in enumerate(surfaces):
            hit = self._mean_cache.get(surface) if use_cache else None
            if hit is None:
                refs = self._piece_refs(surface)
                vec = sum(self._ref_vec(ref) for ref in refs) / len(refs)
                hit = (vec, refs)
                if use_cache:
                    self._mean_cache[surface] = hit
            rows[r] = hit[0]
            backmap.append(hit[1])
        return rows, backmap

    def _invalidate_caches(self) -> None:
        self._mean_cache = {}

    def token_rows(self, surfaces: Sequence[str], use_cache: bool = False):
        means, backmap = self.mean_vectors(surfaces, use_cache)
        return means @ self.params["proj_W"] + self.params["proj_b"], means, backmap

    def _question_matrix(self, words: Sequence[str]):
        rows = np.empty((len(words), self.dim_words))
        refs = []
        for i, w in enumerate(words):
            idx = self.word_index.get(w)
            refs.append(("word", idx) if idx is not None else ("oov", 0))
            rows[i] = self._ref_vec(refs[-1])
        return rows, refs

    def encode(self, words: Sequence[str]):
        if not words:
            raise ValueError("cannot encode an empty question")
        xs, refs = self._question_matrix(words)
        hid = self.hidden
        h = np.zeros(hid)
        m = np.zeros(hid)
        caches, states = [], []
        for x in xs:
            h, m, cache = _lstm_forward(self.params["enc_W"], self.params["enc_b"], x, h, m)
            caches.append(cache)
            states.append(h)
        return np.array(states), caches, refs

    # -- decode protocol ---------------------------------------------------------

    def start(self, question_words: Sequence[str]) -> Session:
        encoding, _, _ = self.encode(list(question_words))
        hid = self.hidden
        c0 = np.concatenate([np.zeros(hid), encoding.mean(axis=0)])
        return Session(encoding, np.zeros(hid), np.zeros(hid), c0)

    def score(self, session: Session, surfaces: Sequence[str]):
        rows, _, _ = self.token_rows(surfaces, use_cache=True)
        h_new, m_new, _ = _lstm_forward(
            self.params["dec_W"], self.params["dec_b"], session.c, session.h, session.m
        )
        log_probs = _log_softmax(rows @ h_new)
        return log_probs, ScoredStep(session, h_new, m_new, rows)

    def commit(self, scored: ScoredStep, choice: int) -> Session:
        Q = scored.session.encoding
        attn = _softmax(Q @ scored.h_new)
        attended = attn @ Q
        c_new = np.concatenate([scored.token_rows[choice], attended])
        return Session(Q, scored.h_new, scored.m_new, c_new)

    # -- training ------------------------------------------------------------------

    def trainable_keys(self) -> list:
        keys = [
            "special_vecs",
            "enc_W",
            "enc_b",
            "dec_W",
            "dec_b",
            "proj_W",
            "proj_b",
        ]
        if not self.config.freeze_embeddings:
            keys = ["word_vecs", "oov_vec"] + keys
        return keys

    def example_loss(self, ex: CompiledExample) -> float:
        loss, _ = self._forward(ex)
        return loss

    def _forward(self, ex: CompiledExample):
        p = self.params
        hid = self.hidden
        Q, enc_caches, q_refs = self.encode(ex.question)
        h = np.zeros(hid)
        m = np.zeros(hid)
        c = np.concatenate([np.zeros(hid), Q.mean(axis=0)])
        loss = 0.0
        tapes = []
        for step in ex.steps:
            means, backmap = self.mean_vectors(step.surfaces)
            rows = means @ p["proj_W"] + p["proj_b"]
            h_new, m_new, cache = _lstm_forward(p["dec_W"], p["dec_b"], c, h, m)
            logits = rows @ h_new
            probs = _softmax(logits)
            loss -= _log_softmax(logits)[step.gold_index]
            attn = _softmax(Q @ h_new)
            attended = attn @ Q
            c = np.concatenate([rows[step.gold_index], attended])
            tapes.append((means, backmap, rows, cache, probs, attn, h_new, step.gold_index))
            h, m = h_new, m_new
        return loss, (Q, enc_caches, q_refs, tapes)

    def example_grads(self, ex: CompiledExample):
        loss, (Q, enc_caches, q_refs, tapes) = self._forward(ex)
        p = self.params
        hid = self.hidden
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dQ = np.zeros_like(Q)
        dh = np.zeros(hid)
        dm = np.zeros(hid)
        dc = np.zeros(2 * hid)  # grad w.r.t. the input c produced by step t
        for means, backmap, rows, cache, probs, attn, h_new, gold in reversed(tapes):
            drows = np.zeros_like(rows)
            dh_new = np.zeros(hid)
            # cross entropy through the token softmax
            dlogits = probs.copy()
            dlogits[gold] -= 1.0
            drows += np.outer(dlogits, h_new)
            dh_new += rows.T @ dlogits
            # next-step input: c_t = [rows[gold]; attn @ Q]
            drows[gold] += dc[:hid]
            d_attended = dc[hid:]
            dQ += np.outer(attn, d_attended)
            d_attn = Q @ d_attended
            d_scores = attn * (d_attn - attn @ d_attn)
            dQ += np.outer(d_scores, h_new)
            dh_new += Q.T @ d_scores
            # decoder cell
            dW, db, dx, dh_prev, dm_prev = _lstm_backward(
                p["dec_W"], cache, dh_new + dh, dm
            )
            grads["dec_W"] += dW
            grads["dec_b"] += db
            dc, dh, dm = dx, dh_prev, dm_prev
            # token rows -> projection -> word vectors
            grads["proj_W"] += means.T @ drows
            grads["proj_b"] += drows.sum(axis=0)
            dmeans = drows @ p["proj_W"].T
            for r, refs in enumerate(backmap):
                share = dmeans[r] / len(refs)
                for kind, idx in refs:
                    if kind == "word":
                        grads["word_vecs"][idx] += share
                    elif kind == "special":
                        grads["special_vecs"][idx] += share
                    else:
                        grads["oov_vec"] += share
        # initial input c_0 = [0; mean(Q)]
        dQ += dc[hid:][None, :] / Q.shape[0]
        # encoder BPTT
        dh_enc = np.zeros(hid)
        dm_enc = np.zeros(hid)
        for i in range(len(enc_caches) - 1, -1, -1):
            dW, db, dx, dh_enc, dm_enc = _lstm_backward(
                p["enc_W"], enc_caches[i], dQ[i] + dh_enc, dm_enc
            )
            grads["enc_W"] += dW
            grads["enc_b"] += db
            kind, idx = q_refs[i]
            if kind == "word":
                grads["word_vecs"][idx] += dx
            else:
                grads["oov_vec"] += dx
        return loss, grads

    def train(self, examples: Sequence[CompiledExample], epochs: Optional[int] = None):
        """Adam over per-example sequence losses; returns mean loss per epoch."""
        cfg = self.config
        epochs = cfg.epochs if epochs is None else epochs
        keys = self.trainable_keys()
        mom = {k: np.zeros_like(self.params[k]) for k in keys}
        vel = {k: np.zeros_like(self.params[k]) for k in keys}
        step = 0
        rng = np.random.default_rng(cfg.seed + 1)
        curve = []
        order = list(range(len(examples)))
        accum = {k: np.zeros_like(self.params[k]) for k in keys}
        pending = 0
        for _ in range(epochs):
            rng.shuffle(order)
            total = 0.0
            for idx in order:
                loss, grads = self.example_grads(examples[idx])
                total += loss
                for k in keys:
                    accum[k] += grads[k]
                pending += 1
                if pending >= cfg.accumulation:
                    step += 1
                    for k in keys:
                        g = accum[k] / pending
                        mom[k] = 0.9 * mom[k] + 0.1 * g
                        vel[k] = 0.999 * vel[k] + 0.001 * g * g
                        m_hat = mom[k] / (1 - 0.9**step)
                        v_hat = vel[k] / (1 - 0.999**step)
                        self.params[k] -= cfg.lr * m_hat / (np.sqrt(v_hat) + 1e-8)
                        accum[k][:] = 0.0
                    pending = 0
            curve.append(total / max(1, len(examples)))
        self._invalidate_caches()
        return curve

    # -- persistence ------------------------------------------------------------------

    CHECKPOINT_VERSION = 1

    def save(self, path) -> None:
        meta = {
            "version": self.CHECKPOINT_VERSION,
            "hidden": self.hidden,
            "dim_words": self.dim_words,
            "words": self.words,
            "config": {
                "hidden": self.config.hidden,
                "seed": self.config.seed,
                "lr": self.config.lr,
                "epochs": self.config.epochs,
                "freeze_embeddings": self.config.freeze_embeddings,
                "accumulation": self.config.accumulation,
                "init_scale": self.config.init_scale,
            },
        }
        np.savez(path, __meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **self.params)

    @staticmethod
    def load(path) -> "StaticScorer":
        data = np.load(path)
        meta = json.loads(bytes(data["__meta"]).decode())
        if meta["version"] != StaticScorer.CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        cfg = ScorerConfig(**meta["config"])
        table = EmbeddingTable(meta["words"], data["word_vecs"])
        scorer = StaticScorer(table, cfg)
        for key in scorer.params:
            scorer.params[key] = data[key].astype(np.float64)
        return scorer


# -- teacher-forcing compilation ------------------------------------------------------


@dataclass
class CompileReport:
    compiled: int = 0
    skipped: list = field(default_factory=list)


def compile_training_pairs(
    kb: KnowledgeBase,
    pairs: Iterable,
    cap: induction.CapConfig = induction.CapConfig(),
    report: Optional[CompileReport] = None,
) -> list:
    """Derive gold token sequences and their admissible sets, per pair.

    `pairs` yields (example_id, question_words, gold Program, entities,
    literals). Pairs whose gold sequence is not derivable are skipped and
    recorded in the report.
    """
    compiled = []
    for example_id, question_words, gold, entities, literals in pairs:
        try:
            state = init_state(kb, entities, literals)
            tokens = derive_gold_tokens(kb, state, gold, cap)
        except induction.InductionError as exc:
            if report is not None:
                report.skipped.append((example_id, str(exc)))
            continue
        steps = [
            StepSample(adm.surfaces(), index)
            for adm, index in induction.replay_tokens(kb, state, tokens, cap)
        ]
        compiled.append(CompiledExample(example_id, list(question_words), steps))
        if report is not None:
            report.compiled += 1
    return compiled
