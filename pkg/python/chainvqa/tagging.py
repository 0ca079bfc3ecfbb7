"""Closed-vocabulary part-of-speech tagging.

Synthetic questions are tagged from a lexicon; real questions arrive pre-tagged
(word, POS, head, dependency) and are only normalized here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .vocab import tokenize

TAGS = (
    "NOUN", "PROPN", "ADJ", "NUM", "DET", "PRON", "ADP", "VERB", "AUX", "BE",
    "VBG", "VBN", "ADV", "CCONJ", "X",
)

NUMBER_WORDS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}

_LEXICON: dict[str, str] = {}


def _register(tag: str, words: str) -> None:
    for word in words.split():
        _LEXICON[word] = tag


_register("BE", "is are was were be am been")
_register("AUX", "do does did can could will would has have had")
_register("DET", "the a an any this that these those some each every which all no another")
_register("PRON", "you it they someone something somebody anything anyone everything "
                  "there what who he she i we them him her its their")
_register("ADP", "on in of near under above below behind beside to with at than by "
                 "inside from for into over onto")
_register("VERB", "see sit hold look stand play eat")
_register("VBG", "sitting standing holding lying playing eating looking")
_register("VBN", "made placed shown painted parked")
_register("ADJ", "red blue green yellow white black brown orange pink purple gray grey "
                 "small large big tiny tall short bigger smaller larger taller shorter "
                 "many much other same similar")
_register("ADV", "how where why when not very")
_register("CCONJ", "and or but")
for _word in NUMBER_WORDS:
    _LEXICON[_word] = "NUM"


def get_plural(word: str) -> str:
    """English plural by suffix rules."""

    if word.endswith("y") and len(word) > 1 and word[-2] not in "aeiou":
        return word[:-1] + "ies"
    if word.endswith(("sh", "ch", "s", "x")):
        return word + "es"
    if word.endswith("z"):
        return word + "zes"
    return word + "s"


def get_singular(word: str) -> str:
    """Inverse of ``get_plural`` for regular nouns; other words pass through."""

    if word.endswith("ies") and len(word) > 3:
        return word[:-3] + "y"
    if word.endswith(("shes", "ches", "sses", "xes")):
        return word[:-2]
    if word.endswith("s") and not word.endswith("ss") and len(word) > 2:
        return word[:-1]
    return word


@dataclass(frozen=True)
class TaggedToken:
    text: str
    pos: str
    head: int
    dep: str = ""
    lemma: str = ""

    @property
    def is_noun(self) -> bool:
        return self.pos in ("NOUN", "PROPN")


def _lemma(word: str, pos: str) -> str:
    if pos == "NUM":
        return str(NUMBER_WORDS.get(word, word))
    if pos == "NOUN":
        return get_singular(word)
    return word


def tag(words: str | Sequence[str]) -> list[TaggedToken]:
    """Lexicon tags for ``words``; unknown words are NOUN, digits are NUM.

    Case is normalized first. Heads point at the token itself: the lexicon path
    carries no dependency parse.
    """

    tokens = tokenize(words) if isinstance(words, str) else [w.lower() for w in words]
    tagged = []
    for i, word in enumerate(tokens):
        pos = "NUM" if word.isdigit() else _LEXICON.get(word, "NOUN")
        tagged.append(TaggedToken(word, pos, i, "", _lemma(word, pos)))
    return tagged


def normalize_pos(pos: str, word: str) -> str:
    """Map an external tagger's coarse or fine tag onto ``TAGS``."""

    pos = pos.upper()
    if pos in ("AUX", "VERB") and _LEXICON.get(word.lower()) == "BE":
        return "BE"
    if pos in ("VBG", "VBN") or pos in TAGS:
        return pos
    fine = {"NN": "NOUN", "NNS": "NOUN", "NNP": "PROPN", "NNPS": "PROPN", "JJ": "ADJ",
            "JJR": "ADJ", "JJS": "ADJ", "CD": "NUM", "DT": "DET", "PRP": "PRON",
            "IN": "ADP", "VB": "VERB", "VBD": "VERB", "VBP": "VERB", "VBZ": "VERB",
            "RB": "ADV", "CC": "CCONJ", "WP": "PRON", "WDT": "DET", "WRB": "ADV"}
    return fine.get(pos, "X")


def from_triples(triples: Iterable[tuple[str, str, int, str]]) -> list[TaggedToken]:
    """Pre-tagged (word, pos, head, dep) rows from an external toolkit."""

    tagged = []
    rows = list(triples)
    for i, (word, pos, head, dep) in enumerate(rows):
        word = word.lower()
        norm = normalize_pos(pos, word)
        head = int(head)
        if not 0 <= head < len(rows):
            head = i
        tagged.append(TaggedToken(word, norm, head, dep, _lemma(word, norm)))
    return tagged
