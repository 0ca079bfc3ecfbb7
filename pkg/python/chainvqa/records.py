"""Line-delimited record schemas and JSONL helpers.

Field order in each model is the serialized key order, so golden files stay
stable across runs.
"""

from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import DatasetError
from .gvr import BoundingBox
from .logger import get_logger
from .scene import RegionSet, Scene, SceneObject

logger = get_logger(__name__)


class SqType(str, Enum):
    """Sub-question families, listed from low to high order."""

    EXISTENCE = "existence"
    ATTRIBUTE = "attribute"
    NUMBER = "number"
    POSITION = "position"
    PREP = "prep"

    @property
    def order(self) -> int:
        return 1 if self is SqType.EXISTENCE else 2


class _Record(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ObjectRecord(_Record):
    label: str
    color: str
    size: str
    box: list[float] = Field(min_length=4, max_length=4)


class SceneRecord(_Record):
    """A scene with its region features; real data may omit the objects."""

    image_id: str
    width: float = 100.0
    height: float = 100.0
    objects: list[ObjectRecord] = Field(default_factory=list)
    boxes: list[list[float]] = Field(default_factory=list)
    features: list[list[float]] = Field(default_factory=list)

    @classmethod
    def from_scene(cls, scene: Scene, regions: RegionSet) -> "SceneRecord":
        return cls(
            image_id=scene.image_id,
            width=scene.width,
            height=scene.height,
            objects=[
                ObjectRecord(label=o.label, color=o.color, size=o.size, box=o.box.as_list())
                for o in scene.objects
            ],
            boxes=[b.as_list() for b in regions.boxes],
            features=regions.features.tolist(),
        )

    def to_scene(self) -> Scene | None:
        if not self.objects:
            return None
        objects = tuple(
            SceneObject(o.label, o.color, o.size, BoundingBox.from_list(o.box)) for o in self.objects
        )
        return Scene(self.image_id, objects, self.width, self.height)

    def to_regions(self) -> RegionSet:
        return RegionSet(self.features, [BoundingBox.from_list(b) for b in self.boxes])


class TokenRecord(_Record):
    word: str
    pos: str
    head: int
    dep: str = ""


class QuestionRecord(_Record):
    """Ingestion row: one question about one image."""

    image_id: str
    question: str
    answers: list[str] = Field(min_length=1)
    question_type: str = "other"
    tokens: list[TokenRecord] | None = None


class SqsItem(_Record):
    sq: str
    sq_type: SqType
    answer: str


class SqsRecord(_Record):
    image_id: str
    question: str
    answers: list[str]
    question_type: str = "other"
    order: int = 0
    match: str | None = None
    sqs: list[SqsItem] = Field(default_factory=list, max_length=4)


class OverrideRecord(_Record):
    """Manual correction replacing the SQS of one (image, question) pair."""

    image_id: str
    question: str
    sqs: list[SqsItem] = Field(default_factory=list, max_length=4)


class DialogueRound(_Record):
    sq: str
    answer: str
    confidence: float = 1.0


class DialogueRecord(_Record):
    image_id: str
    question: str
    rounds: list[DialogueRound] = Field(default_factory=list)
    stop_reason: str


class TraceStep(_Record):
    sq: str
    top_regions: list[int]
    in_degree: list[float]


class TraceRecord(_Record):
    image_id: str
    question: str
    prediction: str
    steps: list[TraceStep] = Field(default_factory=list)
    fusion_attention: list[float] = Field(default_factory=list)


class PredictionRecord(_Record):
    image_id: str
    question: str
    question_type: str
    prediction: str
    answers: list[str]
    score: float
    sqs: list[str] = Field(default_factory=list)


M = TypeVar("M", bound=BaseModel)


def read_jsonl(path: str | Path, model: type[M]) -> list[M]:
    """Parse one ``model`` per non-blank line."""

    records: list[M] = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"Could not read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(model.model_validate_json(line))
        except ValidationError as exc:
            raise DatasetError(f"{path}:{lineno}: invalid {model.__name__}: {exc}") from exc
    logger.debug("Read %d %s records from %s", len(records), model.__name__, path)
    return records


def write_jsonl(path: str | Path, records: Iterable[BaseModel]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(record.model_dump_json())
            handle.write("\n")
            count += 1
    logger.info("Wrote %d records to %s", count, path)
    return path


def index_scenes(records: Sequence[SceneRecord]) -> dict[str, SceneRecord]:
    index: dict[str, SceneRecord] = {}
    for record in records:
        if record.image_id in index:
            raise DatasetError(f"duplicate image id {record.image_id!r}")
        index[record.image_id] = record
    return index
