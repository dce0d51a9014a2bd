"""Contextual backend: joint transformer encoding of question + admissible
tokens at every step, with a recurrent decoding head.

Each step encodes the sequence

    [CLS] q1 ... q|q| [SEP] s1 ... sm [SEP]

through a transformer encoder; the question representation is refined by an
LSTM over the per-word outputs, each admissible token is the mean of its
wordpiece outputs, and the step probability / next input follow the same
recurrent-attention head the engine uses.

Weights load from a local directory when given (a fine-tuned encoder), else a
small randomly initialized encoder is built locally with a fixed seed, which
keeps the service fully offline and deterministic in evaluation mode.
"""

from __future__ import annotations

import hashlib
import re

_WORD_RE = re.compile(r"[A-Za-z]+|\d+(?:\.\d+)?")
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")

PAD_ID, CLS_ID, SEP_ID = 0, 1, 2
_ID_SPACE = 8192


def pieces(surface: str):
    return _WORD_RE.findall(_CAMEL_RE.sub(" ", surface).lower()) or ["<empty>"]


def word_id(word: str) -> int:
    digest = hashlib.sha1(word.encode("utf-8")).digest()
    return 3 + int.from_bytes(digest[:4], "big") % (_ID_SPACE - 3)


class ContextualBackend:
    name = "contextual"

    def __init__(self, model_dir=None, hidden: int = 64, seed: int = 0,
                 max_admissible: int = 128):
        import torch
        from transformers import BertConfig, BertModel

        self.torch = torch
        torch.manual_seed(seed)
        if model_dir:
            self.encoder = BertModel.from_pretrained(model_dir)
        else:
            config = BertConfig(
                vocab_size=_ID_SPACE,
                hidden_size=hidden,
                num_hidden_layers=2,
                num_attention_heads=4,
                intermediate_size=2 * hidden,
                max_position_embeddings=512,
            )
            self.encoder = BertModel(config)
        self.encoder.eval()
        d = self.encoder.config.hidden_size
        self.d = d
        gen = torch.Generator().manual_seed(seed + 1)
        self.question_lstm = torch.nn.LSTM(d, d, batch_first=True)
        self.decoder_cell = torch.nn.LSTMCell(2 * d, d)
        for module in (self.question_lstm, self.decoder_cell):
            for p in module.parameters():
                with torch.no_grad():
                    p.uniform_(-0.08, 0.08, generator=gen)
            module.eval()
        self.max_admissible = max_admissible

    # -- sessions -----------------------------------------------------------------

    def reset(self, question_words):
        if not question_words:
            raise ValueError("empty question")
        torch = self.torch
        return {
            "question": list(question_words),
            "h": torch.zeros(1, self.d),
            "m": torch.zeros(1, self.d),
            "c": None,  # first step derives it from the question encoding
            "pending": None,
        }

    def fork(self, state):
        torch = self.torch
        return {
            "question": list(state["question"]),
            "h": state["h"].clone(),
            "m": state["m"].clone(),
            "c": None if state["c"] is None else state["c"].clone(),
            "pending": None
            if state["pending"] is None
            else tuple(t.clone() for t in state["pending"][:3]) + state["pending"][3:],
        }

    def _encode(self, question_words, surfaces):
        torch = self.torch
        ids = [CLS_ID]
        positions = [0]
        q_spans = []
        for w in question_words:
            q_spans.append(len(ids))
            positions.append(len(ids))
            ids.append(word_id(w.lower()))
        ids.append(SEP_ID)
        positions.append(len(ids))
        base = len(ids) + 1
        token_spans = []
        for s in surfaces:
            start = len(ids)
            for offset, p in enumerate(pieces(s)):
                ids.append(word_id(p))
                # positions restart per admissible segment so identical
                # surfaces are exchangeable and score identically
                positions.append(base + offset)
            token_spans.append((start, len(ids)))
        ids.append(SEP_ID)
        positions.append(base + 64)
        with torch.no_grad():
            out = self.encoder(
                torch.tensor([ids]), position_ids=torch.tensor([positions])
            ).last_hidden_state[0]
            q_states = out[q_spans]  # (|q|, d)
            refined, _ = self.question_lstm(q_states.unsqueeze(0))
            Q = refined[0]
            rows = torch.stack(
                [out[a:b].mean(dim=0) for a, b in token_spans]
            )  # (m, d)
        return Q, rows

    def step(self, state, surfaces):
        torch = self.torch
        Q, rows = self._encode(state["question"], surfaces)
        if state["c"] is None:
            state["c"] = torch.cat([torch.zeros(self.d), Q.mean(dim=0)]).unsqueeze(0)
        with torch.no_grad():
            h_new, m_new = self.decoder_cell(state["c"], (state["h"], state["m"]))
            logits = rows @ h_new[0]
            log_probs = torch.log_softmax(logits, dim=0)
        state["pending"] = (h_new, m_new, rows, Q)
        return [float(v) for v in log_probs]

    def commit(self, state, chosen: int) -> None:
        torch = self.torch
        if state["pending"] is None:
            raise ValueError("commit before step")
        h_new, m_new, rows, Q = state["pending"]
        if not 0 <= chosen < rows.shape[0]:
            raise ValueError(f"chosen_index {chosen} out of range")
        with torch.no_grad():
            attn = torch.softmax(Q @ h_new[0], dim=0)
            attended = attn @ Q
            state["c"] = torch.cat([rows[chosen], attended]).unsqueeze(0)
        state["h"] = h_new
        state["m"] = m_new
        state["pending"] = None
