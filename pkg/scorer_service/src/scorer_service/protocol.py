"""Wire protocol: newline-delimited JSON, one request per line, one response
per line, strictly ordered.

Kinds: handshake, reset, step, fork, commit. Sessions are opaque tokens held
server-side; fork duplicates a session (including a pending step) so beam
search can expand siblings. Malformed input never kills the service: it
answers {"kind": "error", ...} and keeps existing sessions intact.
"""

from __future__ import annotations

import json
from typing import Optional

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    pass


class SessionTable:
    def __init__(self):
        self._sessions: dict = {}
        self._counter = 0

    def create(self, state) -> str:
        self._counter += 1
        token = f"s{self._counter}"
        self._sessions[token] = state
        return token

    def get(self, token):
        if token not in self._sessions:
            raise ProtocolError(f"unknown session {token!r}")
        return self._sessions[token]

    def __len__(self):
        return len(self._sessions)


class Responder:
    """Couples a scoring backend to the message schema."""

    def __init__(self, backend):
        self.backend = backend
        self.sessions = SessionTable()

    def handle_line(self, line: str) -> str:
        try:
            payload = self._handle(line)
        except ProtocolError as exc:
            payload = {"v": PROTOCOL_VERSION, "kind": "error", "error": str(exc)}
        except Exception as exc:  # noqa: BLE001 - the service must never crash
            payload = {
                "v": PROTOCOL_VERSION,
                "kind": "error",
                "error": f"{type(exc).__name__}: {exc}",
            }
        return json.dumps(payload)

    def _handle(self, line: str) -> dict:
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed message: {exc}") from exc
        if not isinstance(request, dict):
            raise ProtocolError("request must be an object")
        kind = request.get("kind")
        if kind == "handshake":
            return {
                "v": PROTOCOL_VERSION,
                "kind": "handshake",
                "backend": self.backend.name,
                "max_admissible": self.backend.max_admissible,
            }
        if kind == "reset":
            question = request.get("question")
            if not isinstance(question, list) or not all(
                isinstance(w, str) for w in question
            ):
                raise ProtocolError("reset needs a question word list")
            token = self.sessions.create(self.backend.reset(question))
            return {"v": PROTOCOL_VERSION, "kind": "reset", "session": token}
        if kind == "step":
            state = self.sessions.get(request.get("session"))
            admissible = request.get("admissible")
            if not isinstance(admissible, list) or not admissible:
                raise ProtocolError("step needs a non-empty admissible list")
            surfaces: list[Optional[str]] = [None] * len(admissible)
            for item in admissible:
                if (
                    not isinstance(item, dict)
                    or not isinstance(item.get("index"), int)
                    or not isinstance(item.get("surface"), str)
                    or not 0 <= item["index"] < len(admissible)
                ):
                    raise ProtocolError("admissible items need index and surface")
                surfaces[item["index"]] = item["surface"]
            if any(s is None for s in surfaces):
                raise ProtocolError("admissible indexes must cover 0..m-1")
            if len(surfaces) > self.backend.max_admissible:
                raise ProtocolError(
                    f"admissible set exceeds budget {self.backend.max_admissible}"
                )
            scores = self.backend.step(state, surfaces)
            return {
                "v": PROTOCOL_VERSION,
                "kind": "step",
                "session": request["session"],
                "log_scores": [float(s) for s in scores],
            }
        if kind == "fork":
            state = self.sessions.get(request.get("session"))
            token = self.sessions.create(self.backend.fork(state))
            return {"v": PROTOCOL_VERSION, "kind": "fork", "session": token}
        if kind == "commit":
            state = self.sessions.get(request.get("session"))
            chosen = request.get("chosen_index")
            if not isinstance(chosen, int):
                raise ProtocolError("commit needs chosen_index")
            self.backend.commit(state, chosen)
            return {
                "v": PROTOCOL_VERSION,
                "kind": "commit",
                "session": request["session"],
            }
        raise ProtocolError(f"unknown kind {kind!r}")


def serve_stream(responder: Responder, infile, outfile) -> None:
    for line in infile:
        line = line.strip()
        if not line:
            continue
        outfile.write(responder.handle_line(line) + "\n")
        outfile.flush()


def serve_socket(responder: Responder, path: str) -> None:
    import socket

    server = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    server.bind(path)
    server.listen(1)
    while True:
        conn, _ = server.accept()
        with conn, conn.makefile("r") as rf, conn.makefile("w") as wf:
            serve_stream(responder, rf, wf)
