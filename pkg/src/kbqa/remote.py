"""Engine-side client for an external scorer service.

Transport: newline-delimited JSON over the child process' standard streams,
one request per line, one response per line, strictly ordered. Sessions live
server-side behind opaque tokens; `commit` forks before advancing so sibling
beam expansions keep their parent session intact.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from typing import Optional, Sequence

PROTOCOL_VERSION = 1


class RemoteScorerError(Exception):
    pass


class RemoteScorer:
    def __init__(self, command, cwd: Optional[str] = None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            cwd=cwd,
            text=True,
            bufsize=1,
        )
        self.max_admissible = None
        hello = self._request({"v": PROTOCOL_VERSION, "kind": "handshake"})
        self.max_admissible = int(hello.get("max_admissible", 0)) or None

    def _request(self, payload: dict) -> dict:
        if self.proc.poll() is not None:
            raise RemoteScorerError("scorer service exited")
        self.proc.stdin.write(json.dumps(payload) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise RemoteScorerError("scorer service closed its output stream")
        response = json.loads(line)
        if response.get("kind") == "error":
            raise RemoteScorerError(response.get("error", "unknown service error"))
        return response

    # -- decode protocol -------------------------------------------------------

    def start(self, question_words: Sequence[str]):
        response = self._request(
            {"v": PROTOCOL_VERSION, "kind": "reset", "question": list(question_words)}
        )
        return response["session"]

    def score(self, session, surfaces: Sequence[str]):
        if self.max_admissible is not None and len(surfaces) > self.max_admissible:
            raise RemoteScorerError(
                f"admissible set of {len(surfaces)} exceeds the service budget "
                f"of {self.max_admissible}"
            )
        response = self._request(
            {
                "v": PROTOCOL_VERSION,
                "kind": "step",
                "session": session,
                "admissible": [
                    {"index": i, "surface": s} for i, s in enumerate(surfaces)
                ],
            }
        )
        scores = response["log_scores"]
        if len(scores) != len(surfaces):
            raise RemoteScorerError("misaligned log_scores from service")
        return scores, response["session"]

    def commit(self, session, choice: int):
        forked = self._request(
            {"v": PROTOCOL_VERSION, "kind": "fork", "session": session}
        )["session"]
        response = self._request(
            {
                "v": PROTOCOL_VERSION,
                "kind": "commit",
                "session": forked,
                "chosen_index": choice,
            }
        )
        return response["session"]

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            self.proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
