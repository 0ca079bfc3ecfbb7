"""Command-line entry point: ``chainvqa <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from pydantic import BaseModel

from .answerer import Answerer
from .config import RunConfig, load_config
from .errors import ChainVqaError
from .logger import get_logger
from .oracle import GroundTruthOracle, LearnedOracle
from .pipeline import (
    VARIANTS,
    Models,
    build_answers,
    build_sqs_records,
    build_vocab,
    evaluate,
    feature_width_of,
    generate_corpus,
    infer,
    make_samples,
    run_ablation,
)
from .questioner import Questioner
from .records import OverrideRecord, QuestionRecord, SceneRecord, SqsRecord, read_jsonl, write_jsonl
from .sqsgen import dataset_stats
from .training import train_answerer, train_oracle, train_questioner
from .version import log_startup

logger = get_logger(__name__)


def _write_json(path: str | Path, model: BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def _config(args: argparse.Namespace) -> RunConfig:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"synthetic.seed={args.seed}")
    return load_config(args.preset, args.config, overrides=overrides)


def _samples(args: argparse.Namespace, sqs_path: str):
    scenes = read_jsonl(args.scenes, SceneRecord)
    records = read_jsonl(sqs_path, SqsRecord)
    return records, make_samples(records, scenes)


def _models(args: argparse.Namespace, config: RunConfig) -> Models:
    oracle = (LearnedOracle.load(args.oracle) if args.oracle
              else GroundTruthOracle(config.sqs.overlap_threshold))
    return Models(Questioner.load(args.questioner), oracle, Answerer.load(args.answerer))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_synthetic(args: argparse.Namespace, config: RunConfig) -> int:
    corpus = generate_corpus(config.synthetic)
    out = Path(args.out)
    write_jsonl(out / "scenes.jsonl", corpus.scenes)
    write_jsonl(out / "train.jsonl", corpus.train)
    write_jsonl(out / "test.jsonl", corpus.test)
    return 0


def cmd_build_sqs(args: argparse.Namespace, config: RunConfig) -> int:
    scenes = read_jsonl(args.scenes, SceneRecord)
    questions = read_jsonl(args.questions, QuestionRecord)
    overrides = read_jsonl(args.overrides, OverrideRecord) if args.overrides else []
    write_jsonl(args.out, build_sqs_records(questions, scenes, config, overrides))
    return 0


def cmd_stats(args: argparse.Namespace, config: RunConfig) -> int:
    stats = dataset_stats(read_jsonl(args.sqs, SqsRecord))
    if args.out:
        _write_json(args.out, stats)
    else:
        print(stats.model_dump_json(indent=2))
    return 0


def cmd_train_questioner(args: argparse.Namespace, config: RunConfig) -> int:
    records, samples = _samples(args, args.sqs)
    questioner, _ = train_questioner(samples, config, build_vocab(records), feature_width_of(samples))
    questioner.save(args.out)
    return 0


def cmd_train_oracle(args: argparse.Namespace, config: RunConfig) -> int:
    records, samples = _samples(args, args.sqs)
    oracle, _ = train_oracle(samples, config, build_vocab(records), feature_width_of(samples))
    oracle.save(args.out)
    return 0


def cmd_train_answerer(args: argparse.Namespace, config: RunConfig) -> int:
    records, samples = _samples(args, args.sqs)
    answerer, _ = train_answerer(
        samples, config, build_vocab(records), build_answers(records), feature_width_of(samples),
        use_sub_loss=False if args.no_sub_loss else None,
    )
    answerer.save(args.out)
    return 0


def cmd_infer(args: argparse.Namespace, config: RunConfig) -> int:
    _, samples = _samples(args, args.sqs)
    models = _models(args, config)
    source = args.sqs_source or config.train.sqs_source
    results = [infer(s, models, sqs_source=source) for s in samples]
    write_jsonl(args.out, [r.prediction for r in results])
    if args.dialogues:
        write_jsonl(args.dialogues, [r.dialogue for r in results if r.dialogue is not None])
    return 0


def cmd_dump_trace(args: argparse.Namespace, config: RunConfig) -> int:
    _, samples = _samples(args, args.sqs)
    models = _models(args, config)
    source = args.sqs_source or config.train.sqs_source
    write_jsonl(args.out, [infer(s, models, sqs_source=source).trace() for s in samples])
    return 0


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    train_records = read_jsonl(args.train_sqs, SqsRecord)
    _, test = _samples(args, args.sqs)
    evaluation = evaluate(test, train_records, _models(args, config), config,
                          variant=args.variant, sqs_source=args.sqs_source)
    _write_json(args.out, evaluation.report)
    if args.dialogues:
        write_jsonl(args.dialogues, evaluation.dialogues)
    return 0


def cmd_ablate(args: argparse.Namespace, config: RunConfig) -> int:
    _, train = _samples(args, args.train_sqs)
    _, test = _samples(args, args.sqs)
    report = run_ablation(args.variant, train, test, config, _models(args, config),
                          sqs_source=args.sqs_source)
    _write_json(args.out, report)
    return 0


def cmd_serve(args: argparse.Namespace, config: RunConfig) -> int:
    import uvicorn

    from .server import create_app

    models = _models(args, config) if args.questioner and args.answerer else None
    uvicorn.run(create_app(config, models), host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'section.key = value' config file")
    common.add_argument("--preset", default="desk", help="config preset (desk or paper)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
    return common


def _model_args(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--questioner", required=required, help="questioner checkpoint")
    parser.add_argument("--answerer", required=required, help="answerer checkpoint")
    parser.add_argument("--oracle", help="learned oracle checkpoint (default: scene oracle)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainvqa", description="Sub-question chain VQA toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command")
    common = _common()

    p = sub.add_parser("gen-synthetic", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="shortcut for --set synthetic.seed=N")
    p.set_defaults(handler=cmd_gen_synthetic)

    p = sub.add_parser("build-sqs", parents=[common], help="decompose questions into SQS records")
    p.add_argument("--scenes", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--overrides", help="manual SQS replacements")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_build_sqs)

    p = sub.add_parser("stats", parents=[common], help="SQS dataset statistics")
    p.add_argument("--sqs", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_stats)

    for name, handler in (("train-questioner", cmd_train_questioner),
                          ("train-oracle", cmd_train_oracle),
                          ("train-answerer", cmd_train_answerer)):
        p = sub.add_parser(name, parents=[common], help=f"train the {name.split('-')[1]}")
        p.add_argument("--scenes", required=True)
        p.add_argument("--sqs", required=True)
        p.add_argument("--out", required=True, help="checkpoint path")
        if name == "train-answerer":
            p.add_argument("--no-sub-loss", action="store_true", help="drop the sub-answer losses")
        p.set_defaults(handler=handler)

    for name, handler in (("infer", cmd_infer), ("dump-trace", cmd_dump_trace)):
        p = sub.add_parser(name, parents=[common], help=f"{name} over an SQS file")
        p.add_argument("--scenes", required=True)
        p.add_argument("--sqs", required=True)
        p.add_argument("--sqs-source", choices=("generated", "gold"))
        p.add_argument("--out", required=True)
        if name == "infer":
            p.add_argument("--dialogues", help="write the generation log here")
        _model_args(p)
        p.set_defaults(handler=handler)

    for name, handler in (("eval", cmd_eval), ("ablate", cmd_ablate)):
        p = sub.add_parser(name, parents=[common], help=f"{name} on a test SQS file")
        p.add_argument("--scenes", required=True)
        p.add_argument("--train-sqs", required=True)
        p.add_argument("--sqs", required=True, help="test SQS records")
        p.add_argument("--sqs-source", choices=("generated", "gold"))
        p.add_argument("--variant", choices=VARIANTS, default="full")
        p.add_argument("--out", required=True, help="report path")
        if name == "eval":
            p.add_argument("--dialogues", help="write the generation log here")
        _model_args(p)
        p.set_defaults(handler=handler)

    p = sub.add_parser("serve", parents=[common], help="run the inference service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    _model_args(p, required=False)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if getattr(args, "handler", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        config = _config(args)
        log_startup(args.command)
        logger.info("config hash %s", config.config_hash())
        return args.handler(args, config)
    except ChainVqaError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
