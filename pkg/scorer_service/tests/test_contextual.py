import json
import math

import pytest

torch = pytest.importorskip("torch")
pytest.importorskip("transformers")

from scorer_service.contextual_backend import ContextualBackend
from scorer_service.protocol import Responder


@pytest.fixture(scope="module")
def backend():
    return ContextualBackend(hidden=32, seed=0, max_admissible=64)


def ask(responder, payload):
    return json.loads(responder.handle_line(json.dumps(payload)))


def test_singleton_score_is_zero(backend):
    state = backend.reset(["which", "wines"])
    scores = backend.step(state, ["JOIN"])
    assert scores == [0.0]


def test_duplicate_surfaces_equal_scores(backend):
    state = backend.reset(["which", "wines"])
    scores = backend.step(state, ["wine.region", "other.rel", "wine.region"])
    assert math.isclose(scores[0], scores[2], rel_tol=1e-6)


def test_distribution_and_determinism(backend):
    def play(b):
        state = b.reset(["which", "wine", "has", "alcohol"])
        out = []
        for _ in range(3):
            scores = b.step(state, ["(", "wine.alcohol_level", "<eos>"])
            out.append(tuple(scores))
            b.commit(state, 1)
        return out

    first = play(backend)
    again = play(backend)
    assert first == again
    total = sum(math.exp(s) for s in first[0])
    assert abs(total - 1.0) < 1e-5
    # a fresh instance with the same seed reproduces the same scores
    other = ContextualBackend(hidden=32, seed=0, max_admissible=64)
    assert play(other) == first


def test_commit_changes_later_scores(backend):
    state_a = backend.reset(["q"])
    state_b = backend.reset(["q"])
    surfaces = ["alpha.beta", "gamma"]
    backend.step(state_a, surfaces)
    backend.commit(state_a, 0)
    backend.step(state_b, surfaces)
    backend.commit(state_b, 1)
    follow = ["one.two", "three"]
    assert backend.step(state_a, follow) != backend.step(state_b, follow)


def test_protocol_integration_and_fork(backend):
    responder = Responder(backend)
    hello = ask(responder, {"v": 1, "kind": "handshake"})
    assert hello["backend"] == "contextual" and hello["max_admissible"] == 64
    session = ask(responder, {"v": 1, "kind": "reset", "question": ["which", "wines"]})["session"]
    admissible = [{"index": 0, "surface": "("}, {"index": 1, "surface": "<eos>"}]
    ask(responder, {"v": 1, "kind": "step", "session": session, "admissible": admissible})
    fork = ask(responder, {"v": 1, "kind": "fork", "session": session})["session"]
    done = ask(responder, {"v": 1, "kind": "commit", "session": fork, "chosen_index": 0})
    assert done["kind"] == "commit"
    # parent keeps its pending step
    done = ask(responder, {"v": 1, "kind": "commit", "session": session, "chosen_index": 1})
    assert done["kind"] == "commit"


def test_budget_reported_and_enforced(backend):
    responder = Responder(backend)
    session = ask(responder, {"v": 1, "kind": "reset", "question": ["q"]})["session"]
    too_many = [{"index": i, "surface": f"t{i}"} for i in range(65)]
    err = ask(responder, {"v": 1, "kind": "step", "session": session, "admissible": too_many})
    assert err["kind"] == "error"
