from __future__ import annotations

import numpy as np
import pytest

from chainvqa.config import SyntheticConfig
from chainvqa.errors import DatasetError
from chainvqa.synthetic import NUMBER, YES_NO, answer_vocabulary, gen_questions, gen_scene


@pytest.mark.parametrize("seed", [0, 1, 17, 12345])
def test_gen_scene_is_deterministic(seed):
    config = SyntheticConfig()
    a, regions_a = gen_scene(config, seed)
    b, regions_b = gen_scene(config, seed)
    assert a == b
    assert np.array_equal(regions_a.features, regions_b.features)
    assert a.image_id == f"syn-{seed:06d}"


@pytest.mark.parametrize("seed", range(30))
def test_scene_objects_stay_on_the_canvas(seed):
    config = SyntheticConfig(canvas_width=200.0, canvas_height=80.0)
    scene, regions = gen_scene(config, seed)
    assert config.min_objects <= len(scene.objects) <= config.max_objects
    for obj in scene.objects:
        b = obj.box
        assert b.w > 0 and b.h > 0
        assert 0 <= b.x and b.x + b.w <= 200.0 + 1e-9
        assert 0 <= b.y and b.y + b.h <= 80.0 + 1e-9
        assert obj.label in config.labels
        assert obj.color in config.colors
        assert obj.size in config.sizes
    assert regions.features.shape == (len(scene.objects), config.feature_width)
    assert regions.boxes == [obj.box for obj in scene.objects]


def test_region_features_are_one_hot_plus_box():
    config = SyntheticConfig()
    scene, regions = gen_scene(config, 3)
    n_labels, n_colors, n_sizes = len(config.labels), len(config.colors), len(config.sizes)
    for obj, row in zip(scene.objects, regions.features):
        assert row[config.labels.index(obj.label)] == 1.0
        assert row[n_labels + config.colors.index(obj.color)] == 1.0
        assert row[n_labels + n_colors + config.sizes.index(obj.size)] == 1.0
        offset = n_labels + n_colors + n_sizes
        assert np.allclose(row[offset:offset + 4], np.array(obj.box.as_list()) / 100.0)
        assert not row[offset + 4:].any()


def test_empty_vocabulary_is_rejected():
    with pytest.raises(DatasetError):
        gen_scene(SyntheticConfig(colors=[]), 0)


@pytest.mark.parametrize("seed", range(20))
def test_generated_answers_follow_the_scene(seed):
    config = SyntheticConfig()
    scene, _ = gen_scene(config, seed)
    questions = gen_questions(scene, config)
    assert len(questions) >= min(config.questions_per_scene, len(scene.labels()))
    for label in scene.labels():
        assert any(q.question == f"is there a {label}" and q.answer == "yes" for q in questions)
    for q in questions:
        if q.question.startswith("how many"):
            assert q.question_type == NUMBER
            label = next(l for l in scene.labels() if q.question.split()[2].startswith(l))
            assert q.answer == str(scene.count(label))
        if q.question_type == YES_NO:
            assert q.answer in ("yes", "no")


def test_gen_questions_is_seeded_by_image_id():
    config = SyntheticConfig()
    scene, _ = gen_scene(config, 9)
    assert gen_questions(scene, config) == gen_questions(scene, config)
    assert gen_questions(scene, config, seed=1) == gen_questions(scene, config, seed=1)


def test_answer_vocabulary():
    words = answer_vocabulary(SyntheticConfig())
    assert words[:2] == ["yes", "no"]
    assert len(words) == len(set(words))
    assert "5" in words and "dog" in words
