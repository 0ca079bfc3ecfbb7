"""Rule-based decomposition of a question into an ordered yes/no sub-question sequence.

Pipeline: tag, extract noun blocks, drop filtered and abstract heads, decide
the question order, instantiate templates per entity and per modifier tuple,
sort from low to high order and answer every item from the scene.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from pydantic import BaseModel

from .config import SqsConfig
from .errors import DatasetError
from .logger import get_logger
from .oracle import gt_answer
from .records import OverrideRecord, SqsItem, SqsRecord, SqType
from .scene import Scene
from .tagging import TaggedToken, get_plural, tag

logger = get_logger(__name__)

# Meaningless quantifiers, pronouns and picture-level nouns, plus the nouns
# that only name what is being asked about ("what color", "what time").
FILTER_WORDS = frozenset({
    "lots", "lot", "someone", "something", "you", "they", "it", "this", "type",
    "picture", "body", "photo", "image",
    "color", "colour", "kind", "time", "number", "shape", "size",
})
ABSTRACT_NOUNS = frozenset({"direction", "design", "surface", "area", "emotion", "skill"})
NON_SUBSTANTIVE_NOUNS = frozenset({"mode", "base", "day", "love", "name", "print", "piece"})
POSITION_WORDS = frozenset({"left", "right", "middle"})
SPATIAL_PREPOSITIONS = {"on": "on", "onto": "on", "in": "in", "inside": "in"}
QUANTIFIER_WORDS = frozenset({"many", "much"})


class ModifierKind(str, Enum):
    ADJECTIVE = "adjective"
    QUANTIFIER = "quantifier"
    PREP_PHRASE = "preposition-phrase"


@dataclass(frozen=True)
class Modifier:
    kind: ModifierKind
    value: str
    preposition: str | None = None
    target: str | None = None


@dataclass
class NounBlock:
    head: str
    plural: bool = False
    modifiers: list[Modifier] = field(default_factory=list)
    start: int = 0
    end: int = 0

    @property
    def tuples(self) -> list[tuple[str, str]]:
        return [(self.head, m.value) for m in self.modifiers]


class MatchType(str, Enum):
    EXISTENCE = "existence"
    VERB = "verb"
    ATTRIBUTE = "attribute"
    NUM = "num"
    PREP = "prep"


# ---------------------------------------------------------------------------
# Noun blocks
# ---------------------------------------------------------------------------


def _chunks(tagged: Sequence[TaggedToken]) -> list[tuple[int, int]]:
    """Spans [start, end) shaped DET* (ADJ|NUM)* NOUN+; the last noun is the head."""

    spans, i, n = [], 0, len(tagged)
    while i < n:
        j = i
        while j < n and tagged[j].pos == "DET":
            j += 1
        while j < n and tagged[j].pos in ("ADJ", "NUM") and not _is_comparative(tagged, j):
            j += 1
        k = j
        while k < n and tagged[k].is_noun:
            k += 1
        if k > j:
            spans.append((i, k))
            i = k
        else:
            i += 1
    return spans


def _is_comparative(tagged: Sequence[TaggedToken], i: int) -> bool:
    return i + 1 < len(tagged) and tagged[i + 1].text == "than"


def _premodifiers(tagged: Sequence[TaggedToken], start: int, head: int) -> list[Modifier]:
    mods = []
    for token in tagged[start:head]:
        if token.pos == "NUM" or token.text in QUANTIFIER_WORDS:
            mods.append(Modifier(ModifierKind.QUANTIFIER, token.lemma))
        elif token.pos == "ADJ":
            mods.append(Modifier(ModifierKind.ADJECTIVE, token.lemma))
    return mods


def _owner(tagged: Sequence[TaggedToken], index: int, blocks: list[NounBlock],
           default: NounBlock | None) -> NounBlock | None:
    """Block a free token attaches to: its dependency head if parsed, else ``default``."""

    head = tagged[index].head
    if head != index:
        for block in blocks:
            if block.start <= head < block.end:
                return block
    return default


def extract_noun_blocks(tagged: Sequence[TaggedToken]) -> list[NounBlock]:
    """Noun chunks minus filter-list heads, with (noun, modifier) tuples attached.

    Adjectives inside a chunk or standing free after it become adjective or
    quantifier tuples; a chunk introduced by on/in becomes a prepositional
    tuple of the preceding block (a position tuple for left/right/middle).
    Comparatives followed by "than" only mark a comparison.
    """

    blocks: list[NounBlock] = []
    previous: NounBlock | None = None
    covered: set[int] = set()
    for start, end in _chunks(tagged):
        covered.update(range(start, end))
        head = tagged[end - 1]
        if head.text in FILTER_WORDS or head.lemma in FILTER_WORDS:
            logger.debug("Filtered noun block %r", head.text)
            continue
        prep_index = start - 1
        prep = tagged[prep_index].lemma if prep_index >= 0 and tagged[prep_index].pos == "ADP" else None
        if head.lemma in POSITION_WORDS:
            owner = _owner(tagged, prep_index, blocks, previous) if prep else None
            if owner is not None and prep in ("on", "in", "to"):
                owner.modifiers.append(
                    Modifier(ModifierKind.PREP_PHRASE, f"{prep} {head.lemma}", prep, head.lemma))
            continue
        block = NounBlock(
            head=head.lemma,
            plural=head.text != head.lemma,
            modifiers=_premodifiers(tagged, start, end - 1),
            start=start,
            end=end,
        )
        if prep in SPATIAL_PREPOSITIONS:
            owner = _owner(tagged, prep_index, blocks, previous)
            if owner is not None:
                canonical = SPATIAL_PREPOSITIONS[prep]
                owner.modifiers.append(Modifier(
                    ModifierKind.PREP_PHRASE, f"{canonical} {block.head}", canonical, block.head))
        blocks.append(block)
        previous = block

    for i, token in enumerate(tagged):
        if i in covered or token.pos != "ADJ" or _is_comparative(tagged, i):
            continue
        preceding = [b for b in blocks if b.end <= i]
        owner = _owner(tagged, i, blocks, preceding[-1] if preceding else None)
        if owner is None:
            continue
        kind = ModifierKind.QUANTIFIER if token.text in QUANTIFIER_WORDS else ModifierKind.ADJECTIVE
        owner.modifiers.append(Modifier(kind, token.lemma))
    return blocks


def filter_abstract(blocks: Iterable[NounBlock]) -> list[NounBlock]:
    """Drop abstract and non-substantive heads along with tuples that point at them."""

    dropped = ABSTRACT_NOUNS | NON_SUBSTANTIVE_NOUNS
    kept = []
    for block in blocks:
        if block.head in dropped:
            logger.debug("Filtered abstract noun %r", block.head)
            continue
        block.modifiers = [m for m in block.modifiers if m.target not in dropped]
        kept.append(block)
    return kept


def classify_order(blocks: Sequence[NounBlock]) -> int:
    """0 no entity, 1 one bare entity, 2 entity with modifiers, 3 two or more entities."""

    heads = {block.head for block in blocks}
    if not heads:
        return 0
    if len(heads) >= 2:
        return 3
    return 2 if any(block.modifiers for block in blocks) else 1


# ---------------------------------------------------------------------------
# Pattern matching
# ---------------------------------------------------------------------------

_ENTITY = r"(?:(?:DET|PRON|ADP) )*(?:(?:NOUN|PROPN) )*(?:NOUN )?"

_MATCH_PATTERNS: list[tuple[MatchType, str]] = [
    (MatchType.EXISTENCE, rf"(?:DOYOUSEE )?{_ENTITY}"),
    (MatchType.VERB, rf"(?:DOYOUSEE )?{_ENTITY}(?:(?:VBG|VBN) )?"),
    (MatchType.ATTRIBUTE, rf"BE {_ENTITY}(?:ADJ )?"),
    (MatchType.NUM, r"BE (?:(?:DET|PRON|ADP) )*NUM NOUN (?:NOUN )*"),
    (MatchType.PREP, r"BE (?:(?:DET|PRON|ADP) )*(?:(?:NOUN|PROPN) )*NOUN (?:VERB )?ADP DET NOUN (?:NOUN )*"),
]


def _tag_string(tagged: Sequence[TaggedToken]) -> str:
    words = [t.text for t in tagged]
    tags = [t.pos for t in tagged]
    if words[:3] == ["do", "you", "see"]:
        tags = ["DOYOUSEE"] + tags[3:]
    return "".join(f"{t} " for t in tags)


def match_type(tagged: Sequence[TaggedToken]) -> MatchType | None:
    """First full-sequence pattern match in Existence, Verb, Attribute, Num, Prep order."""

    if not tagged:
        return None
    text = _tag_string(tagged)
    for kind, pattern in _MATCH_PATTERNS:
        if re.fullmatch(pattern, text):
            return kind
    return None


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------


def existence_sq(head: str, plural: bool = False) -> str:
    return f"Are there {get_plural(head)}?" if plural else f"Is there any {head}?"


def attribute_sq(head: str, attribute: str) -> str:
    return f"Is the {head} {attribute}?"


def number_sq(head: str, count: int) -> str:
    return f"Is there only one {head}?" if count == 1 else f"Are there {count} {get_plural(head)}?"


def prep_sq(head: str, preposition: str, other: str) -> str:
    return f"Is there any {head} {preposition} the {other}?"


def position_sq(head: str, position: str) -> str:
    return f"Is the {head} in the middle?" if position == "middle" else f"Is the {head} on the {position}?"


def _tuple_sq(block: NounBlock, mod: Modifier, scene: Scene) -> tuple[str, SqType] | None:
    if mod.kind is ModifierKind.ADJECTIVE:
        return attribute_sq(block.head, mod.value), SqType.ATTRIBUTE
    if mod.kind is ModifierKind.QUANTIFIER:
        count = int(mod.value) if mod.value.isdigit() else scene.count(block.head)
        if count == 0:
            return None
        return number_sq(block.head, count), SqType.NUMBER
    if mod.target in POSITION_WORDS:
        return position_sq(block.head, mod.target), SqType.POSITION
    return prep_sq(block.head, mod.preposition, mod.target), SqType.PREP


def _candidates(blocks: Sequence[NounBlock], scene: Scene) -> list[tuple[str, SqType]]:
    found: list[tuple[str, SqType]] = []
    for block in blocks:
        found.append((existence_sq(block.head, block.plural), SqType.EXISTENCE))
    for block in blocks:
        for mod in block.modifiers:
            sq = _tuple_sq(block, mod, scene)
            if sq is not None:
                found.append(sq)
    return found


def build_sqs(
    question: str,
    scene: Scene,
    *,
    image_id: str | None = None,
    answers: Sequence[str] = (),
    question_type: str = "other",
    tagged: Sequence[TaggedToken] | None = None,
    config: SqsConfig | None = None,
) -> SqsRecord:
    """Decompose ``question`` into its SQS, answered from ``scene``.

    Order-0 and order-1 questions get an empty sequence. Items are stable
    sorted by template order, deduplicated and capped at ``max_sqs``.
    """

    config = config or SqsConfig()
    if scene is None:
        raise DatasetError("building an SQS needs scene annotations for the answers")
    tagged = list(tagged) if tagged is not None else tag(question)
    blocks = extract_noun_blocks(tagged)
    matched = None
    if not blocks:
        matched = match_type(tagged)
        if matched not in (None, MatchType.EXISTENCE):
            blocks = [
                NounBlock(head=t.lemma, plural=t.text != t.lemma, start=i, end=i + 1)
                for i, t in enumerate(tagged)
                if t.is_noun and t.lemma not in FILTER_WORDS and t.text not in FILTER_WORDS
            ]
    blocks = filter_abstract(blocks)
    order = classify_order(blocks)

    items: list[SqsItem] = []
    if order >= 2:
        seen: set[str] = set()
        ranked = sorted(_candidates(blocks, scene), key=lambda c: c[1].order)
        for text, sq_type in ranked:
            if text in seen:
                continue
            seen.add(text)
            answer = gt_answer(text, scene, config.overlap_threshold)
            items.append(SqsItem(sq=text, sq_type=sq_type, answer=answer.answer))
        items = items[: config.max_sqs]
    logger.debug("%r -> order %d, %d SQs", question, order, len(items))
    return SqsRecord(
        image_id=image_id or scene.image_id,
        question=question,
        answers=list(answers),
        question_type=question_type,
        order=order,
        match=matched.value if matched else None,
        sqs=items,
    )


# ---------------------------------------------------------------------------
# Statistics and overrides
# ---------------------------------------------------------------------------


class DatasetStats(BaseModel):
    images: int = 0
    qa_pairs: int = 0
    non_empty_sqs: int = 0
    avg_sq: float = 0.0
    sq_types: dict[str, int] = {}
    sq_answers: dict[str, int] = {}
    sqs_lengths: dict[str, int] = {}
    orders: dict[str, int] = {}


def dataset_stats(records: Sequence[SqsRecord]) -> DatasetStats:
    """Image, Q&A and non-empty SQS counts with SQ type, answer, length and order histograms."""

    if not records:
        return DatasetStats()
    types: Counter[str] = Counter()
    answers: Counter[str] = Counter()
    for record in records:
        for item in record.sqs:
            types[item.sq_type.value] += 1
            answers[item.answer] += 1
    lengths = Counter(str(len(r.sqs)) for r in records)
    orders = Counter(str(r.order) for r in records)
    return DatasetStats(
        images=len({r.image_id for r in records}),
        qa_pairs=len(records),
        non_empty_sqs=sum(1 for r in records if r.sqs),
        avg_sq=sum(len(r.sqs) for r in records) / len(records),
        sq_types=dict(sorted(types.items())),
        sq_answers=dict(sorted(answers.items())),
        sqs_lengths=dict(sorted(lengths.items())),
        orders=dict(sorted(orders.items())),
    )


def merge_overrides(records: Sequence[SqsRecord], overrides: Iterable[OverrideRecord]
                    ) -> list[SqsRecord]:
    """Replace the SQS of every (image_id, question) pair named in ``overrides``."""

    table = {(o.image_id, o.question): o for o in overrides}
    merged, applied = [], 0
    for record in records:
        override = table.get((record.image_id, record.question))
        if override is None:
            merged.append(record)
            continue
        merged.append(record.model_copy(update={"sqs": list(override.sqs)}))
        applied += 1
    if applied < len(table):
        logger.warning("%d overrides matched no record", len(table) - applied)
    logger.info("Applied %d manual SQS overrides", applied)
    return merged
