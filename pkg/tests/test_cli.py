import json

import pytest

from kbqa.cli import main
from kbqa.harness import save_dataset, Example
from kbqa.scorer import EmbeddingTable

from conftest import DATA_DIR

WINE_KB = str(DATA_DIR / "wine_fragment.tsv")
PEOPLE_KB = str(DATA_DIR / "people_fragment.tsv")


def run(capsys, *args):
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_load_kb_stats(capsys):
    code, out, _ = run(capsys, "load-kb", "--kb", WINE_KB)
    assert code == 0
    stats = json.loads(out)
    assert stats["triples"] == 8 and stats["relations"] == 6


def test_parse_roundtrip(capsys):
    text = "(COUNT (JOIN wine.wine.wine_sub_region_inv Tulum_Valley))"
    code, out, _ = run(capsys, "parse", "--kb", WINE_KB, text)
    assert code == 0 and out.strip() == text


def test_execute_cons_on_people_fragment(capsys):
    code, out, _ = run(
        capsys, "execute", "--kb", PEOPLE_KB,
        "(CONS (JOIN people.person.children Elie_Wiesel) people.person.gender Male)",
    )
    assert code == 0
    result = json.loads(out)
    assert result["members"] == ["Elisha_Wiesel"]


def test_execute_count(capsys):
    code, out, _ = run(
        capsys, "execute", "--kb", WINE_KB,
        "(COUNT (JOIN wine.wine.wine_sub_region_inv Tulum_Valley))",
    )
    assert json.loads(out) == {"count": 2}


def test_error_is_machine_readable(capsys):
    code, out, err = run(capsys, "execute", "--kb", WINE_KB, "(JOIN broken")
    assert code == 1
    record = json.loads(err)
    assert "error" in record and "type" in record


@pytest.fixture()
def tiny_assets(tmp_path):
    dataset = tmp_path / "train.jsonl"
    examples = [
        Example("a1", "which wines come from tulum valley",
                "(JOIN wine.wine.wine_sub_region_inv Tulum_Valley)",
                [("tulum valley", "Tulum_Valley", 1.0)], []),
        Example("a2", "how many wines come from tulum valley",
                "(COUNT (JOIN wine.wine.wine_sub_region_inv Tulum_Valley))",
                [("tulum valley", "Tulum_Valley", 1.0)], []),
        Example("a3", "which wine has the highest percentage alcohol",
                "(ARGMAX (JOIN wine.wine.wine_sub_region_inv Tulum_Valley)"
                " wine.wine.percentage_alcohol)",
                [("tulum valley", "Tulum_Valley", 1.0)], []),
    ]
    save_dataset(examples, dataset)
    words = sorted(
        {
            w
            for ex in examples
            for w in ex.question.split()
        }
        | {"wine", "region", "sub", "percentage", "alcohol", "valley", "tulum"}
    )
    embeddings = tmp_path / "vectors.txt"
    EmbeddingTable.random(words, dim=12, seed=1).save(embeddings)
    return dataset, embeddings, tmp_path


def test_train_eval_answer_cycle(capsys, tiny_assets):
    dataset, embeddings, tmp = tiny_assets
    ckpt = tmp / "model.npz"
    code, out, _ = run(
        capsys, "train", "--kb", WINE_KB, "--dataset", str(dataset),
        "--embeddings", str(embeddings), "--out", str(ckpt),
        "--epochs", "40", "--hidden", "24", "--lr", "0.005", "--seed", "3",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["examples"] == 3 and not payload["skipped"]
    assert payload["loss_curve"][-1] < payload["loss_curve"][0]
    assert ckpt.exists()

    report_path = tmp / "report.json"
    code, out, _ = run(
        capsys, "eval", "--kb", WINE_KB, "--dataset", str(dataset),
        "--checkpoint", str(ckpt), "--out", str(report_path),
    )
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["examples"] == 3
    assert 0.0 <= report["mean_f1"] <= 1.0

    code, out, _ = run(
        capsys, "answer", "--kb", WINE_KB, "--checkpoint", str(ckpt),
        "--question", "which wines come from tulum valley",
        "--entity", "Tulum_Valley:0.95",
    )
    assert code == 0
    answer = json.loads(out)
    assert answer["hypotheses"], "expected at least one hypothesis"
    top = answer["hypotheses"][0]
    assert top["program"].startswith("(")
    assert top["denotation"]


def test_eval_with_oracle_scorer_default(capsys, tiny_assets):
    dataset, _, _ = tiny_assets
    code, out, _ = run(
        capsys, "eval", "--kb", WINE_KB, "--dataset", str(dataset), "--pretty"
    )
    assert code == 0
    report = json.loads(out)
    assert report["mean_em"] == 1.0


def test_answer_requires_scorer(capsys):
    code, _, err = run(
        capsys, "answer", "--kb", WINE_KB, "--question", "anything"
    )
    assert code == 1 and "error" in json.loads(err)
