"""Ground-truth scenes, region sets and the geometric predicates over them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import SyntheticConfig
from .errors import DatasetError, GeometryError
from .gvr import BoundingBox
from .tensor import Tensor

POSITIONS = ("left", "middle", "right")


@dataclass(frozen=True)
class SceneObject:
    label: str
    color: str
    size: str
    box: BoundingBox

    def has_attribute(self, attribute: str) -> bool:
        return attribute in (self.color, self.size)


@dataclass(frozen=True)
class Scene:
    """Annotated image: labeled, attributed boxes on a canvas."""

    image_id: str
    objects: tuple[SceneObject, ...]
    width: float = 100.0
    height: float = 100.0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise GeometryError("canvas extents must be positive")
        for obj in self.objects:
            b = obj.box
            if b.x < 0 or b.y < 0 or b.x + b.w > self.width + 1e-9 or b.y + b.h > self.height + 1e-9:
                raise GeometryError(f"{obj.label} box {b.as_list()} leaves the canvas")

    def with_label(self, label: str) -> list[SceneObject]:
        return [obj for obj in self.objects if obj.label == label]

    def count(self, label: str) -> int:
        return len(self.with_label(label))

    def labels(self) -> list[str]:
        """Distinct labels in first-appearance order."""

        return list(dict.fromkeys(obj.label for obj in self.objects))

    def position_of(self, obj: SceneObject) -> str:
        return horizontal_third(obj.box, self.width)


@dataclass
class RegionSet:
    """Per-image region feature matrix (M x width) with one box per row."""

    features: np.ndarray
    boxes: list[BoundingBox] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DatasetError("a region set needs at least one region")
        if len(self.boxes) != self.features.shape[0]:
            raise DatasetError(
                f"{len(self.boxes)} boxes for {self.features.shape[0]} region features"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    def tensor(self) -> Tensor:
        return Tensor(self.features)


def horizontal_third(box: BoundingBox, canvas_width: float) -> str:
    """left for center x in [0, 1/3), middle for [1/3, 2/3], right for (2/3, 1]."""

    cx = box.center[0] / canvas_width
    if cx < 1.0 / 3.0:
        return "left"
    if cx <= 2.0 / 3.0:
        return "middle"
    return "right"


def overlap_ratio(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over the smaller box's area."""

    return a.intersection(b) / min(a.area, b.area)


def is_on(a: BoundingBox, b: BoundingBox, threshold: float = 0.5) -> bool:
    """``a`` rests on ``b``: enough overlap and ``a``'s center sits higher (smaller y)."""

    return overlap_ratio(a, b) >= threshold and a.center[1] < b.center[1]


def is_in(a: BoundingBox, b: BoundingBox, threshold: float = 0.5) -> bool:
    """``a`` is inside ``b``: the share of ``a`` covered by ``b`` reaches the threshold."""

    return a.intersection(b) / a.area >= threshold


def encode_regions(scene: Scene, config: SyntheticConfig) -> RegionSet:
    """One row per object: label, color and size one-hots plus the normalized box, zero padded."""

    offsets = np.cumsum([0, len(config.labels), len(config.colors), len(config.sizes)])
    rows = np.zeros((len(scene.objects), config.feature_width))
    for i, obj in enumerate(scene.objects):
        for offset, vocab, value in (
            (offsets[0], config.labels, obj.label),
            (offsets[1], config.colors, obj.color),
            (offsets[2], config.sizes, obj.size),
        ):
            if value not in vocab:
                raise DatasetError(f"{value!r} is not in the synthetic vocabulary")
            rows[i, offset + vocab.index(value)] = 1.0
        b = obj.box
        rows[i, offsets[3]:offsets[3] + 4] = [
            b.x / scene.width, b.y / scene.height, b.w / scene.width, b.h / scene.height,
        ]
    return RegionSet(rows, [obj.box for obj in scene.objects])


def scene_from_objects(image_id: str, objects: Iterable[Sequence], width: float = 100.0,
                       height: float = 100.0) -> Scene:
    """Convenience builder from (label, color, size, (x, y, w, h)) tuples."""

    built = tuple(
        SceneObject(label, color, size, BoundingBox.from_list(box))
        for label, color, size, box in objects
    )
    return Scene(image_id, built, width, height)
