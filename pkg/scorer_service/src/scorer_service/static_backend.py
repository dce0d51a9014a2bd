"""Replay backend: serves the engine's own trained scorer from its checkpoint.

Checkpoint contract (the engine's .npz container):
  __meta        uint8 bytes of a JSON object {version, hidden, dim_words,
                words: [...], config: {...}}
  word_vecs     (n_words, d_w)   oov_vec  (d_w,)
  special_vecs  (n_special, d_w) rows for "(", ")", "<eos>", then the eleven
                function names in their canonical order
  enc_W (4h, d_w+h)  enc_b (4h,)   question LSTM
  dec_W (4h, 3h)     dec_b (4h,)   decoder LSTM over inputs [token; attended]
  proj_W (d_w, h)    proj_b (h,)   token-embedding projection

Scoring semantics (must match the engine bit for bit):
  * a surface is embedded as the mean of its name-piece word vectors
    (split on dots, underscores, camel boundaries; lowercase; out-of-table
    pieces use oov_vec), except the special surfaces which use their row;
  * the question is encoded once per session by the LSTM; h0 = m0 = 0 and the
    first decoder input is [0 ; mean of the encoder states];
  * one step: (h, m) <- lstm(dec, c, h, m); log-softmax of rows @ h;
  * commit(j): attention = softmax(Q @ h); c <- [rows[j] ; attention @ Q].
"""

from __future__ import annotations

import json
import re

import numpy as np

FUNCTIONS = ("JOIN", "AND", "ARGMAX", "ARGMIN", "LT", "LE", "GT", "GE", "COUNT", "CONS", "TC")
SPECIAL_SURFACES = ("(", ")", "<eos>") + FUNCTIONS

_WORD_RE = re.compile(r"[A-Za-z]+|\d+(?:\.\d+)?")
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def pieces(surface: str):
    return _WORD_RE.findall(_CAMEL_RE.sub(" ", surface).lower())


class _Session:
    __slots__ = ("encoding", "h", "m", "c", "pending")

    def __init__(self, encoding, h, m, c):
        self.encoding = encoding
        self.h = h
        self.m = m
        self.c = c
        self.pending = None  # (h_new, m_new, rows) awaiting a commit

    def copy(self):
        twin = _Session(self.encoding, self.h, self.m, self.c)
        twin.pending = self.pending
        return twin


class StaticBackend:
    name = "static"

    def __init__(self, checkpoint_path, max_admissible: int = 4096):
        data = np.load(checkpoint_path)
        meta = json.loads(bytes(data["__meta"]).decode())
        if meta.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        self.hidden = int(meta["hidden"])
        self.words = {w: i for i, w in enumerate(meta["words"])}
        self.p = {
            key: np.asarray(data[key], dtype=np.float64)
            for key in (
                "word_vecs", "oov_vec", "special_vecs",
                "enc_W", "enc_b", "dec_W", "dec_b", "proj_W", "proj_b",
            )
        }
        self.special = {s: i for i, s in enumerate(SPECIAL_SURFACES)}
        self.max_admissible = max_admissible
        self._mean_cache: dict = {}

    # -- embedding ----------------------------------------------------------

    def _word_vec(self, word: str):
        idx = self.words.get(word)
        return self.p["word_vecs"][idx] if idx is not None else self.p["oov_vec"]

    def _mean_vec(self, surface: str):
        hit = self._mean_cache.get(surface)
        if hit is not None:
            return hit
        if surface in self.special:
            vec = self.p["special_vecs"][self.special[surface]]
        else:
            parts = pieces(surface) or [""]
            vec = sum(self._word_vec(w) for w in parts) / len(parts)
            if not pieces(surface):
                vec = self.p["oov_vec"]
        self._mean_cache[surface] = vec
        return vec

    def _rows(self, surfaces):
        means = np.stack([self._mean_vec(s) for s in surfaces])
        return means @ self.p["proj_W"] + self.p["proj_b"]

    # -- recurrent cells -----------------------------------------------------

    def _lstm(self, W, b, x, h, m):
        hid = self.hidden
        z = W @ np.concatenate([x, h]) + b
        i = 1.0 / (1.0 + np.exp(-z[:hid]))
        f = 1.0 / (1.0 + np.exp(-z[hid : 2 * hid]))
        g = np.tanh(z[2 * hid : 3 * hid])
        o = 1.0 / (1.0 + np.exp(-z[3 * hid :]))
        m_new = f * m + i * g
        return o * np.tanh(m_new), m_new

    # -- backend interface ------------------------------------------------------

    def reset(self, question_words):
        if not question_words:
            raise ValueError("empty question")
        hid = self.hidden
        h = np.zeros(hid)
        m = np.zeros(hid)
        states = []
        for w in question_words:
            idx = self.words.get(w)
            x = self.p["word_vecs"][idx] if idx is not None else self.p["oov_vec"]
            h, m = self._lstm(self.p["enc_W"], self.p["enc_b"], x, h, m)
            states.append(h)
        encoding = np.array(states)
        c0 = np.concatenate([np.zeros(hid), encoding.mean(axis=0)])
        return _Session(encoding, np.zeros(hid), np.zeros(hid), c0)

    def step(self, session: _Session, surfaces):
        rows = self._rows(surfaces)
        h_new, m_new = self._lstm(
            self.p["dec_W"], self.p["dec_b"], session.c, session.h, session.m
        )
        logits = rows @ h_new
        shifted = logits - np.max(logits)
        log_probs = shifted - np.log(np.exp(shifted).sum())
        session.pending = (h_new, m_new, rows)
        return log_probs

    def fork(self, session: _Session) -> _Session:
        return session.copy()

    def commit(self, session: _Session, chosen: int) -> None:
        if session.pending is None:
            raise ValueError("commit before step")
        h_new, m_new, rows = session.pending
        if not 0 <= chosen < rows.shape[0]:
            raise ValueError(f"chosen_index {chosen} out of range")
        Q = session.encoding
        scores = Q @ h_new
        shifted = np.exp(scores - np.max(scores))
        attn = shifted / shifted.sum()
        session.h = h_new
        session.m = m_new
        session.c = np.concatenate([rows[chosen], attn @ Q])
        session.pending = None
