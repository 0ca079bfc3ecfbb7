"""Seeded synthetic scenes and template questions answered from scene truth."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .config import SyntheticConfig
from .errors import DatasetError
from .gvr import BoundingBox
from .logger import get_logger
from .scene import RegionSet, Scene, SceneObject, encode_regions, horizontal_third, is_on
from .tagging import get_plural

logger = get_logger(__name__)

YES, NO = "yes", "no"

# VQA-style coarse answer types
YES_NO, NUMBER, OTHER = "yes/no", "number", "other"
QUESTION_TYPES = (YES_NO, NUMBER, OTHER)


@dataclass(frozen=True)
class GeneratedQuestion:
    question: str
    answer: str
    question_type: str


def _box_extent(rng: np.random.Generator, size_index: int, sizes: int, scale: float) -> float:
    low = 8.0 + 14.0 * size_index / max(sizes - 1, 1)
    return float(rng.uniform(low, low + 8.0)) * scale


def gen_scene(config: SyntheticConfig, seed: int, image_id: str | None = None
              ) -> tuple[Scene, RegionSet]:
    """Random non-degenerate scene plus its region encoding, bit-identical per seed.

    With probability ``stack_prob`` an object is placed on top of an earlier one
    so that prepositional questions have positive cases.
    """

    if not config.labels or not config.colors or not config.sizes:
        raise DatasetError("synthetic vocabulary is empty")
    rng = np.random.default_rng(seed)
    width, height = config.canvas_width, config.canvas_height
    scale = min(width, height) / 100.0
    count = int(rng.integers(config.min_objects, config.max_objects + 1))
    objects: list[SceneObject] = []
    for _ in range(count):
        label = config.labels[int(rng.integers(len(config.labels)))]
        color = config.colors[int(rng.integers(len(config.colors)))]
        size_index = int(rng.integers(len(config.sizes)))
        w = min(_box_extent(rng, size_index, len(config.sizes), scale), width)
        h = min(_box_extent(rng, size_index, len(config.sizes), scale), height)
        if objects and rng.random() < config.stack_prob:
            base = objects[int(rng.integers(len(objects)))].box
            x = base.x + float(rng.uniform(0.0, max(base.w - w, 0.0)))
            y = base.y - 0.4 * h
        else:
            x = float(rng.uniform(0.0, width - w))
            y = float(rng.uniform(0.0, height - h))
        x = min(max(x, 0.0), width - w)
        y = min(max(y, 0.0), height - h)
        objects.append(SceneObject(label, color, config.sizes[size_index], BoundingBox(x, y, w, h)))
    scene = Scene(image_id or f"syn-{seed:06d}", tuple(objects), width, height)
    return scene, encode_regions(scene, config)


def _bigger(a: SceneObject, b: SceneObject) -> bool:
    return a.box.area > b.box.area


def gen_questions(scene: Scene, config: SyntheticConfig | None = None, *,
                  seed: int | None = None) -> list[GeneratedQuestion]:
    """Template questions of order 1 to 3 with answers computed from the scene.

    Every present label gets an existence question; the remaining slots are
    sampled from attribute, count, position and two-entity templates. Only
    labels with a single instance are referred to as "the <label>".
    """

    config = config or SyntheticConfig()
    if seed is None:
        seed = zlib.crc32(scene.image_id.encode("utf-8"))
    rng = np.random.default_rng(seed)
    present = scene.labels()
    absent = [label for label in config.labels if label not in present]
    unique = [label for label in present if scene.count(label) == 1]

    existence = [GeneratedQuestion(f"is there a {label}", YES, YES_NO) for label in present]
    if absent:
        missing = absent[int(rng.integers(len(absent)))]
        existence.append(GeneratedQuestion(f"is there a {missing}", NO, YES_NO))

    pool: list[GeneratedQuestion] = []
    for label in present:
        n = scene.count(label)
        plural = get_plural(label)
        pool.append(GeneratedQuestion(f"how many {plural} are there", str(n), NUMBER))
        asked = int(rng.integers(2, 4))
        pool.append(GeneratedQuestion(
            f"are there {asked} {plural}", YES if n == asked else NO, YES_NO))
    for label in unique:
        obj = scene.with_label(label)[0]
        pool.append(GeneratedQuestion(f"what color is the {label}", obj.color, OTHER))
        color = obj.color if rng.random() < 0.5 else config.colors[int(rng.integers(len(config.colors)))]
        pool.append(GeneratedQuestion(
            f"is the {label} {color}", YES if obj.color == color else NO, YES_NO))
        where = horizontal_third(obj.box, scene.width)
        asked_where = where if rng.random() < 0.5 else ("left", "middle", "right")[int(rng.integers(3))]
        phrase = "in the middle" if asked_where == "middle" else f"on the {asked_where}"
        pool.append(GeneratedQuestion(
            f"is the {label} {phrase}", YES if where == asked_where else NO, YES_NO))
    for a_label in unique:
        for b_label in unique:
            if a_label == b_label:
                continue
            a, b = scene.with_label(a_label)[0], scene.with_label(b_label)[0]
            on = is_on(a.box, b.box, 0.5)
            pool.append(GeneratedQuestion(f"is the {a_label} on the {b_label}", YES if on else NO, YES_NO))
            pool.append(GeneratedQuestion(
                f"is the {a_label} bigger than the {b_label}", YES if _bigger(a, b) else NO, YES_NO))
            pool.append(GeneratedQuestion(
                f"what color is the {a_label} near the {b.color} {b_label}", a.color, OTHER))

    extra = max(config.questions_per_scene - len(existence), 0)
    order = rng.permutation(len(pool))[:extra] if pool else []
    questions = existence + [pool[i] for i in sorted(order)]
    logger.debug("Scene %s: %d questions", scene.image_id, len(questions))
    return questions


def answer_vocabulary(config: SyntheticConfig) -> list[str]:
    """yes/no, colors, sizes, counts 0-5 and labels."""

    words = [YES, NO, *config.colors, *config.sizes, *(str(n) for n in range(6)), *config.labels]
    return list(dict.fromkeys(words))
