import json
import math
import random
import string
import subprocess
import sys

import pytest

from scorer_service.protocol import Responder
from scorer_service.static_backend import StaticBackend


@pytest.fixture()
def responder(tiny_checkpoint):
    return Responder(StaticBackend(tiny_checkpoint))


def ask(responder, payload):
    return json.loads(responder.handle_line(json.dumps(payload)))


def test_handshake(responder):
    resp = ask(responder, {"v": 1, "kind": "handshake"})
    assert resp["kind"] == "handshake"
    assert resp["backend"] == "static"
    assert resp["max_admissible"] >= 1


def test_reset_step_commit_cycle(responder):
    session = ask(responder, {"v": 1, "kind": "reset", "question": ["which", "wines"]})["session"]
    step = ask(
        responder,
        {
            "v": 1,
            "kind": "step",
            "session": session,
            "admissible": [
                {"index": 0, "surface": "("},
                {"index": 1, "surface": "<eos>"},
            ],
        },
    )
    scores = step["log_scores"]
    assert len(scores) == 2
    assert abs(sum(math.exp(s) for s in scores) - 1.0) < 1e-9
    done = ask(responder, {"v": 1, "kind": "commit", "session": session, "chosen_index": 0})
    assert done["kind"] == "commit"


def test_singleton_softmax_logscore_zero(responder):
    session = ask(responder, {"v": 1, "kind": "reset", "question": ["q"]})["session"]
    step = ask(
        responder,
        {"v": 1, "kind": "step", "session": session,
         "admissible": [{"index": 0, "surface": "JOIN"}]},
    )
    assert step["log_scores"] == [0.0]


def test_duplicate_surfaces_equal_scores(responder):
    session = ask(responder, {"v": 1, "kind": "reset", "question": ["q"]})["session"]
    step = ask(
        responder,
        {"v": 1, "kind": "step", "session": session,
         "admissible": [
             {"index": 0, "surface": "wine.region"},
             {"index": 1, "surface": "other.rel"},
             {"index": 2, "surface": "wine.region"},
         ]},
    )
    assert step["log_scores"][0] == step["log_scores"][2]


def test_alignment_follows_indices_not_order(responder):
    session = ask(responder, {"v": 1, "kind": "reset", "question": ["q"]})["session"]
    forward = ask(
        responder,
        {"v": 1, "kind": "step", "session": session,
         "admissible": [
             {"index": 0, "surface": "alpha"},
             {"index": 1, "surface": "beta.gamma"},
         ]},
    )["log_scores"]
    shuffled = ask(
        responder,
        {"v": 1, "kind": "step", "session": session,
         "admissible": [
             {"index": 1, "surface": "beta.gamma"},
             {"index": 0, "surface": "alpha"},
         ]},
    )["log_scores"]
    assert shuffled == forward


def test_fork_preserves_pending_step(responder):
    session = ask(responder, {"v": 1, "kind": "reset", "question": ["q"]})["session"]
    admissible = [
        {"index": 0, "surface": "("},
        {"index": 1, "surface": "<eos>"},
    ]
    ask(responder, {"v": 1, "kind": "step", "session": session, "admissible": admissible})
    fork_a = ask(responder, {"v": 1, "kind": "fork", "session": session})["session"]
    fork_b = ask(responder, {"v": 1, "kind": "fork", "session": session})["session"]
    assert fork_a != fork_b
    ok_a = ask(responder, {"v": 1, "kind": "commit", "session": fork_a, "chosen_index": 0})
    ok_b = ask(responder, {"v": 1, "kind": "commit", "session": fork_b, "chosen_index": 1})
    assert ok_a["kind"] == ok_b["kind"] == "commit"
    # diverged sessions now score differently after different commits
    follow = [{"index": 0, "surface": "JOIN"}, {"index": 1, "surface": "AND"}]
    sa = ask(responder, {"v": 1, "kind": "step", "session": fork_a, "admissible": follow})
    sb = ask(responder, {"v": 1, "kind": "step", "session": fork_b, "admissible": follow})
    assert sa["log_scores"] != sb["log_scores"]


def test_determinism_same_request_sequence(tiny_checkpoint):
    def play():
        responder = Responder(StaticBackend(tiny_checkpoint))
        session = ask(responder, {"v": 1, "kind": "reset", "question": ["which", "wines"]})["session"]
        out = []
        for _ in range(3):
            step = ask(
                responder,
                {"v": 1, "kind": "step", "session": session,
                 "admissible": [
                     {"index": 0, "surface": "("},
                     {"index": 1, "surface": "wine.region.sub"},
                 ]},
            )
            out.append(tuple(step["log_scores"]))
            ask(responder, {"v": 1, "kind": "commit", "session": session, "chosen_index": 0})
        return out

    assert play() == play()


def test_unknown_session_preserves_others(responder):
    session = ask(responder, {"v": 1, "kind": "reset", "question": ["q"]})["session"]
    err = ask(responder, {"v": 1, "kind": "step", "session": "sZZZ",
                          "admissible": [{"index": 0, "surface": "x"}]})
    assert err["kind"] == "error" and "unknown session" in err["error"]
    ok = ask(responder, {"v": 1, "kind": "step", "session": session,
                         "admissible": [{"index": 0, "surface": "x"}]})
    assert ok["log_scores"] == [0.0]


def test_budget_enforced(tiny_checkpoint):
    responder = Responder(StaticBackend(tiny_checkpoint, max_admissible=2))
    session = ask(responder, {"v": 1, "kind": "reset", "question": ["q"]})["session"]
    err = ask(responder, {"v": 1, "kind": "step", "session": session,
                          "admissible": [{"index": i, "surface": "x"} for i in range(3)]})
    assert err["kind"] == "error" and "budget" in err["error"]


def test_malformed_fuzz_never_crashes(responder):
    rng = random.Random(99)
    session = ask(responder, {"v": 1, "kind": "reset", "question": ["q"]})["session"]
    garbage = [
        "not json at all",
        "{}",
        "[]",
        "42",
        '"string"',
        json.dumps({"kind": "step"}),
        json.dumps({"kind": "step", "session": session}),
        json.dumps({"kind": "step", "session": session, "admissible": []}),
        json.dumps({"kind": "step", "session": session, "admissible": [{"surface": "x"}]}),
        json.dumps({"kind": "step", "session": session,
                    "admissible": [{"index": 5, "surface": "x"}]}),
        json.dumps({"kind": "commit", "session": session}),
        json.dumps({"kind": "commit", "session": session, "chosen_index": "zero"}),
        json.dumps({"kind": "reset"}),
        json.dumps({"kind": "reset", "question": "not a list"}),
        json.dumps({"kind": "frobnicate"}),
        json.dumps({"no": "kind"}),
    ]
    for _ in range(200):
        garbage.append("".join(rng.choice(string.printable) for _ in range(rng.randint(1, 60))))
    for line in garbage:
        out = json.loads(responder.handle_line(line))
        assert out["kind"] in ("error", "handshake", "reset", "step", "fork", "commit")
    # service still healthy: the old session works
    ok = ask(responder, {"v": 1, "kind": "step", "session": session,
                         "admissible": [{"index": 0, "surface": "x"}]})
    assert ok["log_scores"] == [0.0]


def test_subprocess_stdio_transport(tiny_checkpoint):
    proc = subprocess.Popen(
        [sys.executable, "-m", "scorer_service", "--backend", "static",
         "--checkpoint", str(tiny_checkpoint)],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1,
    )
    try:
        def rpc(payload):
            proc.stdin.write(json.dumps(payload) + "\n")
            proc.stdin.flush()
            return json.loads(proc.stdout.readline())

        hello = rpc({"v": 1, "kind": "handshake"})
        assert hello["kind"] == "handshake"
        rpc({"not": "valid"})
        session = rpc({"v": 1, "kind": "reset", "question": ["q"]})["session"]
        step = rpc({"v": 1, "kind": "step", "session": session,
                    "admissible": [{"index": 0, "surface": "only"}]})
        assert step["log_scores"] == [0.0]
        assert proc.poll() is None
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)
