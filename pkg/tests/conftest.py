from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

PACKAGE_ROOT = Path(__file__).resolve().parents[1] / "python"
if str(PACKAGE_ROOT) not in sys.path:
    sys.path.insert(0, str(PACKAGE_ROOT))

from chainvqa.config import RunConfig, load_config
from chainvqa.gvr import BoundingBox
from chainvqa.pipeline import build_sqs_records, generate_corpus, make_samples, train_all
from chainvqa.scene import RegionSet, scene_from_objects

TINY_OVERRIDES = [
    "gvr.d_q=16",
    "gvr.d_v=16",
    "gvr.heads=2",
    "gvr.k=3",
    "encoder.layers=1",
    "encoder.heads=2",
    "encoder.ffn=16",
    "answerer.classifier_hidden=16",
    "answerer.sub_hidden=8",
    "answerer.att_hidden=16",
    "questioner.embed_dim=8",
    "questioner.hidden=16",
    "questioner.att_hidden=8",
    "oracle.embed_dim=8",
    "oracle.hidden=16",
    "oracle.att_hidden=8",
    "oracle.epochs=2",
    "synthetic.scenes=6",
    "synthetic.train_scenes=4",
    "synthetic.questions_per_scene=4",
    "synthetic.min_objects=2",
    "synthetic.max_objects=4",
    "train.epochs=2",
    "train.batch_size=8",
    "train.val_fraction=0.25",
]


def tiny_config(*extra: str) -> RunConfig:
    return load_config("desk", overrides=[*TINY_OVERRIDES, *extra], env={})


@pytest.fixture
def config() -> RunConfig:
    return tiny_config()


@pytest.fixture
def table_scene():
    """Red dog on the left, two cats, a yellow cup resting on a brown table on the right."""

    return scene_from_objects(
        "img-1",
        [
            ("dog", "red", "large", (5, 40, 20, 20)),
            ("cat", "blue", "small", (40, 40, 10, 10)),
            ("cat", "green", "small", (45, 10, 10, 10)),
            ("cup", "yellow", "small", (75, 50, 10, 10)),
            ("table", "brown", "large", (70, 55, 25, 20)),
        ],
    )


@pytest.fixture
def random_regions():
    def build(m: int, width: int, seed: int = 0) -> RegionSet:
        rng = np.random.default_rng(seed)
        boxes = [
            BoundingBox(float(rng.uniform(0, 60)), float(rng.uniform(0, 60)),
                        float(rng.uniform(5, 30)), float(rng.uniform(5, 30)))
            for _ in range(m)
        ]
        return RegionSet(rng.normal(size=(m, width)), boxes)

    return build


@pytest.fixture(scope="session")
def tiny_corpus():
    cfg = tiny_config()
    corpus = generate_corpus(cfg.synthetic)
    train_records = build_sqs_records(corpus.train, corpus.scenes, cfg)
    test_records = build_sqs_records(corpus.test, corpus.scenes, cfg)
    return {
        "config": cfg,
        "corpus": corpus,
        "train_records": train_records,
        "test_records": test_records,
        "train": make_samples(train_records, corpus.scenes),
        "test": make_samples(test_records, corpus.scenes),
    }


@pytest.fixture(scope="session")
def tiny_models(tiny_corpus):
    return train_all(tiny_corpus["train"], tiny_corpus["config"])


def desk_config(*extra: str) -> RunConfig:
    return load_config("desk", overrides=list(extra), env={})


@pytest.fixture(scope="session")
def desk_corpus():
    """The default 500-scene seed-0 corpus with SQS records for both splits."""

    cfg = desk_config()
    corpus = generate_corpus(cfg.synthetic)
    train_records = build_sqs_records(corpus.train, corpus.scenes, cfg)
    test_records = build_sqs_records(corpus.test, corpus.scenes, cfg)
    return {
        "config": cfg,
        "corpus": corpus,
        "train_records": train_records,
        "test_records": test_records,
        "train": make_samples(train_records, corpus.scenes),
        "test": make_samples(test_records, corpus.scenes),
    }
