from __future__ import annotations

import json

import pytest

from chainvqa.cli import build_parser, main
from chainvqa.records import QuestionRecord, SceneRecord, SqsRecord, read_jsonl

from conftest import TINY_OVERRIDES


def _tiny_args():
    args = []
    for override in TINY_OVERRIDES:
        args += ["--set", override]
    return args


def test_no_arguments_prints_usage(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_generate_build_and_stats(tmp_path, capsys):
    out = tmp_path / "corpus"
    assert main(["gen-synthetic", "--out", str(out), "--seed", "3", *_tiny_args()]) == 0
    scenes = read_jsonl(out / "scenes.jsonl", SceneRecord)
    questions = read_jsonl(out / "train.jsonl", QuestionRecord)
    assert len(scenes) == 6
    assert questions

    sqs = tmp_path / "train_sqs.jsonl"
    assert main(["build-sqs", "--scenes", str(out / "scenes.jsonl"),
                 "--questions", str(out / "train.jsonl"), "--out", str(sqs), *_tiny_args()]) == 0
    records = read_jsonl(sqs, SqsRecord)
    assert [r.question for r in records] == [q.question for q in questions]

    capsys.readouterr()
    assert main(["stats", "--sqs", str(sqs)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["qa_pairs"] == len(records)

    report = tmp_path / "stats.json"
    assert main(["stats", "--sqs", str(sqs), "--out", str(report)]) == 0
    assert json.loads(report.read_text())["qa_pairs"] == len(records)


def test_seed_changes_the_corpus(tmp_path):
    for seed in ("1", "2"):
        assert main(["gen-synthetic", "--out", str(tmp_path / seed), "--seed", seed,
                     *_tiny_args()]) == 0
    assert (tmp_path / "1" / "scenes.jsonl").read_text() != (tmp_path / "2" / "scenes.jsonl").read_text()


def test_package_errors_exit_with_one(tmp_path):
    assert main(["stats", "--sqs", str(tmp_path / "missing.jsonl")]) == 1
    assert main(["gen-synthetic", "--out", str(tmp_path), "--set", "train.nope=1"]) == 1


def test_parser_knows_every_command():
    parser = build_parser()
    for command in ("gen-synthetic", "build-sqs", "stats", "train-questioner", "train-oracle",
                    "train-answerer", "infer", "dump-trace", "eval", "ablate", "serve"):
        assert command in parser._subparsers._group_actions[0].choices
    args = parser.parse_args(["eval", "--scenes", "s", "--train-sqs", "t", "--sqs", "q",
                              "--out", "o", "--questioner", "a", "--answerer", "b",
                              "--variant", "shuffle"])
    assert args.variant == "shuffle"
    assert args.oracle is None


def _run_pipeline(root):
    """gen-synthetic, build-sqs, train all three models and eval, all under ``root``."""

    tiny = _tiny_args()
    corpus = root / "corpus"
    assert main(["gen-synthetic", "--out", str(corpus), *tiny]) == 0
    scenes = str(corpus / "scenes.jsonl")
    for split in ("train", "test"):
        assert main(["build-sqs", "--scenes", scenes, "--questions", str(corpus / f"{split}.jsonl"),
                     "--out", str(root / f"{split}_sqs.jsonl"), *tiny]) == 0
    train_sqs = str(root / "train_sqs.jsonl")
    for model in ("questioner", "oracle", "answerer"):
        assert main([f"train-{model}", "--scenes", scenes, "--sqs", train_sqs,
                     "--out", str(root / f"{model}.json"), *tiny]) == 0
    assert main(["eval", "--scenes", scenes, "--train-sqs", train_sqs,
                 "--sqs", str(root / "test_sqs.jsonl"), "--out", str(root / "report.json"),
                 "--dialogues", str(root / "dialogues.jsonl"), *_model_args(root), *tiny]) == 0


def _model_args(root):
    return ["--questioner", str(root / "questioner.json"),
            "--answerer", str(root / "answerer.json"),
            "--oracle", str(root / "oracle.json")]


def _checkpoint_without_timestamp(path):
    payload = json.loads(path.read_text())
    del payload["header"]["created"]
    return payload


@pytest.mark.slow
def test_train_and_evaluate_end_to_end(tmp_path):
    _run_pipeline(tmp_path)
    body = json.loads((tmp_path / "report.json").read_text())
    assert body["variant"] == "full"
    assert sum(b["count"] for b in body["per_bucket"].values()) == body["count"]

    traces = tmp_path / "traces.jsonl"
    assert main(["dump-trace", "--scenes", str(tmp_path / "corpus" / "scenes.jsonl"),
                 "--sqs", str(tmp_path / "test_sqs.jsonl"), "--sqs-source", "gold",
                 "--out", str(traces), *_model_args(tmp_path), *_tiny_args()]) == 0
    assert traces.read_text().strip()


@pytest.mark.slow
def test_pipeline_runs_are_byte_identical(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    _run_pipeline(first)
    _run_pipeline(second)
    produced = ["corpus/scenes.jsonl", "corpus/train.jsonl", "corpus/test.jsonl",
                "train_sqs.jsonl", "test_sqs.jsonl", "report.json", "dialogues.jsonl"]
    for name in produced:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    for model in ("questioner", "oracle", "answerer"):
        a = _checkpoint_without_timestamp(first / f"{model}.json")
        b = _checkpoint_without_timestamp(second / f"{model}.json")
        assert a == b, model
