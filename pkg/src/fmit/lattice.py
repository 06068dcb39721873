"""Flat lattice: words, specials and visual objects in one sequence.

Order is ``[CLS], w_1..w_n, [SEP], o_1..o_m``.  Head/tail indices are word
positions: [CLS] is 0, word i is i, [SEP] is n+1.  A noun-phrase object takes
the span of its phrase; the whole image and general-word objects take (1, n),
the real words only.  A cell's own slot in the sequence plays no part in its
head/tail.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")


class Modality(enum.IntEnum):
    WORD = 0
    SPECIAL = 1
    VISUAL = 2


class ObjectKind(enum.Enum):
    WHOLE_IMAGE = "whole"
    NOUN_PHRASE = "phrase"
    GENERAL_WORD = "general"


@dataclass(frozen=True)
class ObjectAnnotation:
    object_id: int
    kind: ObjectKind
    span: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind is ObjectKind.NOUN_PHRASE:
            if self.span is None:
                raise ValueError("a noun-phrase object needs a span")
            if self.span[0] > self.span[1]:
                raise ValueError(f"object span {self.span} has first > last")


@dataclass(frozen=True)
class Cell:
    content: int
    modality: Modality
    head: int
    tail: int


@dataclass(frozen=True)
class FlatLattice:
    cells: tuple[Cell, ...]
    n: int
    m: int

    def __post_init__(self):
        if len(self.cells) != self.n + self.m + 2:
            raise ValueError(f"lattice has {len(self.cells)} cells, expected n + m + 2 = {self.n + self.m + 2}")

    def __len__(self):
        return len(self.cells)

    @property
    def word_slice(self) -> slice:
        return slice(1, self.n + 1)

    @property
    def contents(self) -> np.ndarray:
        return np.array([c.content for c in self.cells], dtype=np.int64)

    @property
    def heads(self) -> np.ndarray:
        return np.array([c.head for c in self.cells], dtype=np.int64)

    @property
    def tails(self) -> np.ndarray:
        return np.array([c.tail for c in self.cells], dtype=np.int64)

    @property
    def modalities(self) -> np.ndarray:
        return np.array([int(c.modality) for c in self.cells], dtype=np.int64)

    def to_rows(self) -> list[tuple[int, str, int, int]]:
        return [(c.content, c.modality.name, c.head, c.tail) for c in self.cells]

    @classmethod
    def from_rows(cls, rows) -> "FlatLattice":
        cells = tuple(Cell(int(c), Modality[mod], int(h), int(t)) for c, mod, h, t in rows)
        n = sum(c.modality is Modality.WORD for c in cells)
        m = sum(c.modality is Modality.VISUAL for c in cells)
        lat = cls(cells, n, m)
        expected = [Modality.SPECIAL] + [Modality.WORD] * n + [Modality.SPECIAL] + [Modality.VISUAL] * m
        if [c.modality for c in cells] != expected:
            raise ValueError("rows are not in [CLS], words, [SEP], objects order")
        return lat


def object_span(obj: ObjectAnnotation, n: int) -> tuple[int, int]:
    if obj.kind is ObjectKind.NOUN_PHRASE:
        first, last = obj.span
        if not 1 <= first <= last <= n:
            raise ValueError(f"object span {obj.span} out of range for sentence length n={n}")
        return first, last
    return 1, n


def build_lattice(tokens, objects=()) -> FlatLattice:
    """Lay out token ids and object annotations as a flat lattice."""
    n = len(tokens)
    if n < 1:
        raise ValueError("cannot build a lattice for an empty sentence")
    cells = [Cell(CLS_ID, Modality.SPECIAL, 0, 0)]
    cells += [Cell(int(tok), Modality.WORD, i, i) for i, tok in enumerate(tokens, 1)]
    cells.append(Cell(SEP_ID, Modality.SPECIAL, n + 1, n + 1))
    for obj in objects:
        head, tail = object_span(obj, n)
        cells.append(Cell(int(obj.object_id), Modality.VISUAL, head, tail))
    return FlatLattice(tuple(cells), n, len(objects))


def modality_mask(lattice: FlatLattice):
    """Boolean selectors ``(word, visual, special)`` over the lattice cells."""
    mods = lattice.modalities
    return mods == Modality.WORD, mods == Modality.VISUAL, mods == Modality.SPECIAL


def render_table(lattice: FlatLattice, words=None, concepts=None) -> str:
    """Aligned text table of (index, content, modality, head, tail)."""
    rows = [("index", "content", "modality", "head", "tail")]
    for i, c in enumerate(lattice.cells):
        if c.modality is Modality.WORD and words is not None:
            label = words[c.content] if c.content < len(words) else str(c.content)
        elif c.modality is Modality.VISUAL and concepts is not None:
            label = concepts[c.content] if c.content < len(concepts) else str(c.content)
        elif c.modality is Modality.SPECIAL:
            label = SPECIAL_TOKENS[c.content]
        else:
            label = str(c.content)
        rows.append((str(i), label, c.modality.name, str(c.head), str(c.tail)))
    widths = [max(len(r[k]) for r in rows) for k in range(5)]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows)
