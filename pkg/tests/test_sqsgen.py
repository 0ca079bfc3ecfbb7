from __future__ import annotations

import pytest

from chainvqa.errors import DatasetError
from chainvqa.records import OverrideRecord, SqsItem, SqType
from chainvqa.sqsgen import (
    MatchType,
    ModifierKind,
    build_sqs,
    classify_order,
    dataset_stats,
    extract_noun_blocks,
    filter_abstract,
    match_type,
    merge_overrides,
    number_sq,
    position_sq,
)
from chainvqa.tagging import from_triples, tag

DOG = ("Is there any dog?", "yes")
CAT = ("Is there any cat?", "yes")
CUP = ("Is there any cup?", "yes")
TABLE = ("Is there any table?", "yes")


@pytest.mark.parametrize(
    "question,order,expected",
    [
        ("What color is the dog?", 1, []),
        ("Is this a dog?", 1, []),
        ("What is on the table?", 1, []),
        ("Is the dog red?", 2, [DOG, ("Is the dog red?", "yes")]),
        ("Is the dog blue?", 2, [DOG, ("Is the dog blue?", "no")]),
        ("Is the dog large?", 2, [DOG, ("Is the dog large?", "yes")]),
        ("Is the dog on the left?", 2, [DOG, ("Is the dog on the left?", "yes")]),
        ("Is the cat in the middle?", 2, [CAT, ("Is the cat in the middle?", "yes")]),
        ("Is the cup on the right?", 2, [CUP, ("Is the cup on the right?", "yes")]),
        ("How many cats are there?", 2, [("Are there cats?", "yes"), ("Are there 2 cats?", "yes")]),
        ("How many dogs are there?", 2,
         [("Are there dogs?", "yes"), ("Is there only one dog?", "yes")]),
        ("How many vases are there?", 2, [("Are there vases?", "no")]),
        ("Are there 3 cats?", 2, [("Are there cats?", "yes"), ("Are there 3 cats?", "no")]),
        ("Are the cats red?", 2, [("Are there cats?", "yes"), ("Is the cat red?", "no")]),
        ("Is the dog red or is the dog brown?", 2,
         [DOG, ("Is the dog red?", "yes"), ("Is the dog brown?", "no")]),
        ("What color is the dog near the red cat?", 3, [DOG, CAT, ("Is the cat red?", "no")]),
        ("Is the cup on the table?", 3,
         [CUP, TABLE, ("Is there any cup on the table?", "yes")]),
        ("Is the table on the cup?", 3,
         [TABLE, CUP, ("Is there any table on the cup?", "no")]),
        ("Is the cup inside the table?", 3,
         [CUP, TABLE, ("Is there any cup in the table?", "yes")]),
        ("What color is the cup on the table?", 3,
         [CUP, TABLE, ("Is there any cup on the table?", "yes")]),
        ("Is the red cup on the table?", 3,
         [CUP, TABLE, ("Is the cup red?", "no"), ("Is there any cup on the table?", "yes")]),
        ("Is the dog bigger than the cat?", 3, [DOG, CAT]),
        ("Is the small red cup on the left of the table?", 3,
         [CUP, TABLE, ("Is the cup small?", "yes"), ("Is the cup red?", "no")]),
        ("What is the color of the picture?", 0, []),
        ("What time is it?", 0, []),
        ("What kind of dog is this?", 1, []),
        ("What is the design on the cup?", 1, []),
        ("What is the name of the dog?", 1, []),
        ("Is the cup yellow?", 2, [CUP, ("Is the cup yellow?", "yes")]),
        ("Is the cat green?", 2, [CAT, ("Is the cat green?", "yes")]),
        ("Is the dog small?", 2, [DOG, ("Is the dog small?", "no")]),
        ("Is the dog on the right?", 2, [DOG, ("Is the dog on the right?", "no")]),
        ("Is the table in the middle?", 2, [TABLE, ("Is the table in the middle?", "no")]),
        ("How many cups are there?", 2,
         [("Are there cups?", "yes"), ("Is there only one cup?", "yes")]),
        ("Are there two dogs?", 2, [("Are there dogs?", "yes"), ("Are there 2 dogs?", "no")]),
        ("Are the cups yellow?", 2, [("Are there cups?", "yes"), ("Is the cup yellow?", "yes")]),
        ("Is the green cat in the middle?", 2,
         [CAT, ("Is the cat green?", "yes"), ("Is the cat in the middle?", "yes")]),
        ("Is the large red dog on the left?", 2,
         [DOG, ("Is the dog large?", "yes"), ("Is the dog red?", "yes"),
          ("Is the dog on the left?", "yes")]),
        ("Is the dog on the table?", 3,
         [DOG, TABLE, ("Is there any dog on the table?", "no")]),
        ("Is the cup sitting on the table?", 3,
         [CUP, TABLE, ("Is there any cup on the table?", "yes")]),
        ("What color is the cat near the green cup?", 3, [CAT, CUP, ("Is the cup green?", "no")]),
        ("Is the yellow cup on the table?", 3,
         [CUP, TABLE, ("Is the cup yellow?", "yes"), ("Is there any cup on the table?", "yes")]),
        ("Is the small yellow cup on the table?", 3,
         [CUP, TABLE, ("Is the cup small?", "yes"), ("Is the cup yellow?", "yes")]),
    ],
)
def test_build_sqs_against_the_scene(question, order, expected, table_scene):
    record = build_sqs(question, table_scene, answers=["yes"])
    assert record.order == order
    assert [(item.sq, item.answer) for item in record.sqs] == expected
    assert record.image_id == "img-1"


def test_items_are_sorted_from_low_to_high_order(table_scene):
    record = build_sqs("Is the small red cup on the left of the table?", table_scene)
    orders = [item.sq_type.order for item in record.sqs]
    assert orders == sorted(orders)
    assert len(record.sqs) == 4


@pytest.mark.parametrize(
    "question,match",
    [
        ("What is the color of the picture?", None),
        ("Is it red?", "attribute"),
        ("Do you see it?", "existence"),
    ],
)
def test_questions_without_entities(question, match, table_scene):
    record = build_sqs(question, table_scene)
    assert record.order == 0
    assert record.sqs == []
    assert record.match == match


def test_abstract_targets_are_dropped(table_scene):
    assert build_sqs("Is the dog on the surface?", table_scene).order == 1
    assert build_sqs("What is the design on the vase?", table_scene).order == 1


def test_pre_tagged_heads_decide_adjective_attachment(table_scene):
    tagged = from_triples([
        ("is", "AUX", 0, "ROOT"),
        ("the", "DT", 2, "det"),
        ("dog", "NN", 0, "nsubj"),
        ("near", "IN", 2, "prep"),
        ("the", "DT", 5, "det"),
        ("cat", "NN", 3, "pobj"),
        ("red", "JJ", 2, "acomp"),
    ])
    question = "is the dog near the cat red"
    parsed = build_sqs(question, table_scene, tagged=tagged)
    assert [(i.sq, i.answer) for i in parsed.sqs] == [DOG, CAT, ("Is the dog red?", "yes")]

    lexicon = build_sqs(question, table_scene)
    assert lexicon.sqs[-1].sq == "Is the cat red?"


def test_missing_scene_is_a_dataset_error():
    with pytest.raises(DatasetError):
        build_sqs("Is the dog red?", None)


def test_noun_blocks_and_modifiers():
    blocks = extract_noun_blocks(tag("is the small red cup on the table"))
    assert [b.head for b in blocks] == ["cup", "table"]
    cup = blocks[0]
    assert [m.kind for m in cup.modifiers] == [
        ModifierKind.ADJECTIVE, ModifierKind.ADJECTIVE, ModifierKind.PREP_PHRASE]
    assert cup.tuples == [("cup", "small"), ("cup", "red"), ("cup", "on table")]


def test_filter_words_never_become_blocks():
    blocks = extract_noun_blocks(tag("what kind of picture is this photo"))
    assert blocks == []


def test_filter_abstract_drops_blocks_and_dangling_tuples():
    blocks = filter_abstract(extract_noun_blocks(tag("is the dog on the surface")))
    assert [b.head for b in blocks] == ["dog"]
    assert blocks[0].modifiers == []


def test_classify_order():
    assert classify_order([]) == 0
    assert classify_order(extract_noun_blocks(tag("the dog"))) == 1
    assert classify_order(extract_noun_blocks(tag("the red dog"))) == 2
    assert classify_order(extract_noun_blocks(tag("the dog and the dog"))) == 1
    assert classify_order(extract_noun_blocks(tag("the dog and the cat"))) == 3


def test_match_type_patterns():
    assert match_type(tag("do you see it")) is MatchType.EXISTENCE
    assert match_type(tag("is it red")) is MatchType.ATTRIBUTE
    assert match_type(tag("what is the color of the picture")) is None
    assert match_type([]) is None


def test_templates():
    assert number_sq("cat", 1) == "Is there only one cat?"
    assert number_sq("box", 3) == "Are there 3 boxes?"
    assert position_sq("cup", "middle") == "Is the cup in the middle?"
    assert position_sq("cup", "left") == "Is the cup on the left?"


def test_max_sqs_cap(table_scene):
    from chainvqa.config import SqsConfig

    record = build_sqs("Is the red cup on the table?", table_scene, config=SqsConfig(max_sqs=2))
    assert [i.sq for i in record.sqs] == [CUP[0], TABLE[0]]


def test_dataset_stats(table_scene):
    records = [
        build_sqs("Is the dog red?", table_scene),
        build_sqs("What color is the dog?", table_scene),
        build_sqs("Is the cup on the table?", table_scene),
    ]
    stats = dataset_stats(records)
    assert stats.images == 1
    assert stats.qa_pairs == 3
    assert stats.non_empty_sqs == 2
    assert stats.avg_sq == pytest.approx(5 / 3)
    assert stats.sq_types == {"attribute": 1, "existence": 3, "prep": 1}
    assert stats.sq_answers == {"yes": 5}
    assert stats.sqs_lengths == {"0": 1, "2": 1, "3": 1}
    assert stats.orders == {"1": 1, "2": 1, "3": 1}
    assert dataset_stats([]).qa_pairs == 0


def test_merge_overrides(table_scene):
    records = [build_sqs("Is the dog red?", table_scene), build_sqs("Is the cup on the table?",
                                                                    table_scene)]
    override = OverrideRecord(
        image_id="img-1",
        question="Is the dog red?",
        sqs=[SqsItem(sq="Is the dog large?", sq_type=SqType.ATTRIBUTE, answer="yes")],
    )
    stray = OverrideRecord(image_id="img-9", question="Is it?", sqs=[])
    merged = merge_overrides(records, [override, stray])
    assert [i.sq for i in merged[0].sqs] == ["Is the dog large?"]
    assert merged[1] == records[1]
