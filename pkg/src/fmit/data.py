"""Synthetic multimodal NER corpora, JSON-lines IO, vocabularies and batching.

Each corpus record is one JSON object per line::

    {"tokens": [...], "labels": [...],
     "objects": [{"concept": "...", "kind": "whole"|"phrase"|"general",
                  "span": [first, last]}]}

``span`` is 1-based inclusive and present exactly for ``"phrase"`` objects.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .crf import BIO_LABELS, BOUNDARY_LABELS, ENTITY_TYPES
from .ebd import decompose_boundaries
from .evaluation import check_bio, extract_spans
from .lattice import SPECIAL_TOKENS, UNK_ID, FlatLattice, ObjectAnnotation, ObjectKind, build_lattice
from .model import CellBatch

log = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
UNK_CONCEPT = "[UNK_OBJ]"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectRecord:
    concept: str
    kind: ObjectKind
    span: tuple[int, int] | None = None


@dataclass
class Sample:
    tokens: list[str]
    labels: list[str]
    objects: list[ObjectRecord] = field(default_factory=list)

    def validate(self) -> None:
        n = len(self.tokens)
        if n == 0:
            raise ValueError("empty sentence")
        if len(self.labels) != n:
            raise ValueError(f"{n} tokens but {len(self.labels)} labels")
        check_bio(self.labels)
        for span in extract_spans(self.labels):
            if span.type not in ENTITY_TYPES:
                raise ValueError(f"unknown entity type {span.type!r}")
        for obj in self.objects:
            if obj.kind is ObjectKind.NOUN_PHRASE:
                if obj.span is None:
                    raise ValueError(f"phrase object {obj.concept!r} has no span")
                a, b = obj.span
                if not 1 <= a <= b <= n:
                    raise ValueError(f"phrase object span {list(obj.span)} out of range for n={n}")
            elif obj.span is not None:
                raise ValueError(f"{obj.kind.value} object {obj.concept!r} must not carry a span")

    def to_record(self) -> dict:
        objs = []
        for o in self.objects:
            d = {"concept": o.concept, "kind": o.kind.value}
            if o.span is not None:
                d["span"] = list(o.span)
            objs.append(d)
        return {"tokens": list(self.tokens), "labels": list(self.labels), "objects": objs}

    @classmethod
    def from_record(cls, rec: dict) -> "Sample":
        if not isinstance(rec, dict):
            raise ValueError("record is not an object")
        try:
            tokens, labels = rec["tokens"], rec["labels"]
            raw_objects = rec.get("objects", [])
        except KeyError as exc:
            raise ValueError(f"missing field {exc}") from None
        if not (isinstance(tokens, list) and all(isinstance(t, str) for t in tokens)):
            raise ValueError("tokens must be an array of strings")
        if not (isinstance(labels, list) and all(isinstance(t, str) for t in labels)):
            raise ValueError("labels must be an array of strings")
        objects = []
        for o in raw_objects:
            try:
                kind = ObjectKind(o["kind"])
                span = o.get("span")
                objects.append(ObjectRecord(str(o["concept"]), kind,
                                            None if span is None else (int(span[0]), int(span[1]))))
            except (KeyError, ValueError, TypeError, IndexError) as exc:
                raise ValueError(f"bad object {o!r}: {exc}") from None
        sample = cls(list(tokens), list(labels), objects)
        sample.validate()
        return sample

    def without_objects(self) -> "Sample":
        return replace(self, objects=[])


def write_corpus(path, samples) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            f.write(json.dumps(s.to_record(), ensure_ascii=False) + "\n")


def read_corpus(path) -> list[Sample]:
    samples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                samples.append(Sample.from_record(json.loads(line)))
            except (json.JSONDecodeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return samples


# ---------------------------------------------------------------- generator

@dataclass
class GeneratorSpec:
    seed: int = 0
    types: tuple = ENTITY_TYPES
    surfaces_per_type: int = 12
    filler_vocab: int = 60
    ambiguity: float = 0.0
    share_group: int = 2
    entity_len: tuple = (1, 3)
    sentence_len: tuple = (4, 12)
    entities_per_sentence: tuple = (1, 3)
    concepts_per_type: int = 3
    p_phrase: float = 0.5
    p_general: float = 0.5
    visual_bias: float = 0.0
    bias_vocab: int = 10
    train_size: int = 200
    dev_size: int = 50
    test_size: int = 100

    def validate(self) -> None:
        for name in ("ambiguity", "p_phrase", "p_general", "visual_bias"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        unknown = set(self.types) - set(ENTITY_TYPES)
        if unknown or not self.types:
            raise ValueError(f"types must be a non-empty subset of {ENTITY_TYPES}")
        if min(self.entity_len) < 1 or self.entity_len[0] > self.entity_len[1]:
            raise ValueError(f"bad entity_len {self.entity_len}")
        if self.sentence_len[0] < 1 or self.sentence_len[0] > self.sentence_len[1]:
            raise ValueError(f"bad sentence_len {self.sentence_len}")
        if self.entities_per_sentence[0] < 0 or self.entities_per_sentence[0] > self.entities_per_sentence[1]:
            raise ValueError(f"bad entities_per_sentence {self.entities_per_sentence}")
        if self.surfaces_per_type < 1 or self.filler_vocab < 1 or self.concepts_per_type < 1:
            raise ValueError("lexicon sizes must be positive")
        if not 1 <= self.bias_vocab <= self.filler_vocab:
            raise ValueError("bias_vocab must be within the filler vocabulary")
        if self.ambiguity > 0:
            shared = round(self.ambiguity * self.surfaces_per_type)
            if shared == 0 or self.share_group < 2 or self.share_group > len(self.types):
                raise ValueError(
                    f"lexicon too small for ambiguity {self.ambiguity}: {self.surfaces_per_type} surfaces "
                    f"per type, {len(self.types)} types, share group {self.share_group}")


@dataclass
class Lexicon:
    surfaces: list[tuple[str, ...]]
    by_type: dict[str, list[int]]
    ambiguous: set[int]
    fillers: list[str]


def _build_lexicon(spec: GeneratorSpec, rng) -> Lexicon:
    types = list(spec.types)
    surfaces: list[tuple[str, ...]] = []
    by_type = {t: [] for t in types}
    ambiguous = set()
    counter = iter(range(10 ** 9))

    def new_surface():
        length = int(rng.integers(spec.entity_len[0], spec.entity_len[1] + 1))
        surfaces.append(tuple(f"x{next(counter)}" for _ in range(length)))
        return len(surfaces) - 1

    n_shared = round(spec.ambiguity * spec.surfaces_per_type) if spec.ambiguity > 0 else 0
    need = {t: n_shared for t in types}
    while any(need.values()):
        open_types = [t for t in types if need[t] > 0]
        if len(open_types) < spec.share_group:
            # top up with types that already have enough, keeping group size
            rest = [t for t in types if t not in open_types]
            pick = open_types + [rest[i] for i in rng.permutation(len(rest))[:spec.share_group - len(open_types)]]
        else:
            order = sorted(open_types, key=lambda t: (-need[t], types.index(t)))
            pick = order[:spec.share_group]
        sid = new_surface()
        ambiguous.add(sid)
        for t in pick:
            by_type[t].append(sid)
            need[t] = max(0, need[t] - 1)
    for t in types:
        while len(by_type[t]) < spec.surfaces_per_type:
            by_type[t].append(new_surface())
    fillers = [f"w{i}" for i in range(spec.filler_vocab)]
    return Lexicon(surfaces, by_type, ambiguous, fillers)


def _compose(total: int, parts: int, minimum: list[int], rng) -> list[int]:
    sizes = list(minimum)
    for _ in range(total - sum(minimum)):
        sizes[int(rng.integers(parts))] += 1
    return sizes


def _generate_sample(spec: GeneratorSpec, lex: Lexicon, rng) -> Sample:
    types = list(spec.types)
    k = int(rng.integers(spec.entities_per_sentence[0], spec.entities_per_sentence[1] + 1))
    mentions = []
    for _ in range(k):
        etype = types[int(rng.integers(len(types)))]
        pool = lex.by_type[etype]
        mentions.append((etype, pool[int(rng.integers(len(pool)))]))
    ent_tokens = sum(len(lex.surfaces[s]) for _, s in mentions)
    n = int(rng.integers(spec.sentence_len[0], spec.sentence_len[1] + 1))
    n_fill = max(n - ent_tokens, max(k - 1, 0), 1 if k == 0 else 0)
    gaps = _compose(n_fill, k + 1, [0] + [1] * max(k - 1, 0) + ([0] if k else []), rng)
    tokens, labels, filler_pos, ent_spans = [], [], [], []

    def add_fillers(count):
        for _ in range(count):
            filler_pos.append(len(tokens) + 1)
            tokens.append(lex.fillers[int(rng.integers(len(lex.fillers)))])
            labels.append("O")

    for i, (etype, sid) in enumerate(mentions):
        add_fillers(gaps[i])
        first = len(tokens) + 1
        for j, tok in enumerate(lex.surfaces[sid]):
            tokens.append(tok)
            labels.append(("B-" if j == 0 else "I-") + etype)
        ent_spans.append((first, len(tokens), etype, sid))
    add_fillers(gaps[k])

    def concept(kind_tag, etype):
        return f"{kind_tag}:{etype}:{int(rng.integers(spec.concepts_per_type))}"

    counts = Counter(t for t, _ in mentions)
    if counts:
        top = max(counts.values())
        majority = [t for t in types if counts.get(t) == top][0]
        whole = concept("scene", majority)
    else:
        whole = "scene:none:0"
    objects = [ObjectRecord(whole, ObjectKind.WHOLE_IMAGE)]
    phrases = []
    for first, last, etype, sid in ent_spans:
        if sid in lex.ambiguous or rng.random() < spec.p_phrase:
            phrases.append(ObjectRecord(concept("obj", etype), ObjectKind.NOUN_PHRASE, (first, last)))
    if spec.visual_bias > 0 and filler_pos and rng.random() < spec.visual_bias:
        salient = set(lex.fillers[:spec.bias_vocab])
        spots = [p for p in filler_pos if tokens[p - 1] in salient] or filler_pos
        p = spots[int(rng.integers(len(spots)))]
        decoy_type = types[int(rng.integers(len(types)))]
        phrases.append(ObjectRecord(concept("obj", decoy_type), ObjectKind.NOUN_PHRASE, (p, p)))
    objects += sorted(phrases, key=lambda o: o.span)
    if rng.random() < spec.p_general:
        present = set(counts)
        for t in ENTITY_TYPES:
            objects.append(ObjectRecord(f"general:{t}:{'hit' if t in present else 'miss'}",
                                        ObjectKind.GENERAL_WORD))
    sample = Sample(tokens, labels, objects)
    sample.validate()
    return sample


def generate_corpus(spec: GeneratorSpec) -> dict[str, list[Sample]]:
    """Deterministic train/dev/test splits for ``spec``; splits draw from
    separate child seeds of ``spec.seed``."""
    spec.validate()
    lex_seq, *split_seqs = np.random.SeedSequence(spec.seed).spawn(1 + len(SPLITS))
    lex = _build_lexicon(spec, np.random.default_rng(lex_seq))
    sizes = dict(train=spec.train_size, dev=spec.dev_size, test=spec.test_size)
    out = {}
    for name, seq in zip(SPLITS, split_seqs):
        rng = np.random.default_rng(seq)
        out[name] = [_generate_sample(spec, lex, rng) for _ in range(sizes[name])]
    return out


def corpus_stats(splits: dict[str, list[Sample]]) -> str:
    """Entity counts per type and split, plus sample counts."""
    names = list(splits)
    counts = {name: Counter(s.type for smp in splits[name] for s in extract_spans(smp.labels)) for name in names}
    rows = [["Entity Type"] + names]
    for t in ENTITY_TYPES:
        rows.append([t] + [str(counts[nm][t]) for nm in names])
    rows.append(["Total"] + [str(sum(counts[nm].values())) for nm in names])
    rows.append(["Num of Samples"] + [str(len(splits[nm])) for nm in names])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def write_splits(out_dir, splits: dict[str, list[Sample]]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, samples in splits.items():
        write_corpus(out / f"{name}.jsonl", samples)
    (out / "stats.txt").write_text(corpus_stats(splits), encoding="utf-8")


def read_split(data_dir, split: str) -> list[Sample]:
    return read_corpus(Path(data_dir) / f"{split}.jsonl")


# ---------------------------------------------------------------- vocab & batching

@dataclass
class Vocab:
    words: list[str]
    concepts: list[str]

    def __post_init__(self):
        self._w = {w: i for i, w in enumerate(self.words)}
        self._c = {c: i for i, c in enumerate(self.concepts)}

    @classmethod
    def build(cls, samples) -> "Vocab":
        words = list(SPECIAL_TOKENS)
        concepts = [UNK_CONCEPT]
        seen_w, seen_c = set(words), set(concepts)
        for s in samples:
            for t in s.tokens:
                if t not in seen_w:
                    seen_w.add(t)
                    words.append(t)
            for o in s.objects:
                if o.concept not in seen_c:
                    seen_c.add(o.concept)
                    concepts.append(o.concept)
        return cls(words, concepts)

    def word_id(self, tok: str) -> int:
        return self._w.get(tok, UNK_ID)

    def concept_id(self, concept: str) -> int:
        return self._c.get(concept, 0)

    def to_dict(self) -> dict:
        return {"words": self.words, "concepts": self.concepts}

    @classmethod
    def from_dict(cls, d) -> "Vocab":
        return cls(list(d["words"]), list(d["concepts"]))


def truncate(sample: Sample, max_len: int) -> Sample:
    """Cut a sample to ``max_len`` tokens; phrase objects past the cut are
    dropped and straddling ones clipped."""
    n = len(sample.tokens)
    if n <= max_len:
        return sample
    log.warning("sample of %d tokens truncated to max_len=%d", n, max_len)
    labels = list(sample.labels[:max_len])
    objects = []
    for o in sample.objects:
        if o.kind is ObjectKind.NOUN_PHRASE:
            if o.span[0] > max_len:
                continue
            o = replace(o, span=(o.span[0], min(o.span[1], max_len)))
        objects.append(o)
    return Sample(list(sample.tokens[:max_len]), labels, objects)


def to_lattice(sample: Sample, vocab: Vocab, use_objects=True) -> FlatLattice:
    ids = [vocab.word_id(t) for t in sample.tokens]
    objs = []
    if use_objects:
        objs = [ObjectAnnotation(vocab.concept_id(o.concept), o.kind, o.span) for o in sample.objects]
    return build_lattice(ids, objs)


@dataclass
class Batch:
    cells: CellBatch
    lengths: np.ndarray
    labels: np.ndarray
    boundaries: np.ndarray
    indices: list[int]

    @property
    def token_mask(self) -> np.ndarray:
        return np.arange(self.labels.shape[1])[None, :] < self.lengths[:, None]

    @property
    def n_max(self) -> int:
        return int(self.lengths.max())


_LABEL_ID = {l: i for i, l in enumerate(BIO_LABELS)}
_BOUNDARY_ID = {l: i for i, l in enumerate(BOUNDARY_LABELS)}


def make_batch(samples, vocab: Vocab, indices=None, use_objects=True, with_labels=True) -> Batch:
    lattices = [to_lattice(s, vocab, use_objects) for s in samples]
    lengths = np.array([len(s.tokens) for s in samples], dtype=np.int64)
    N = int(lengths.max())
    labels = np.zeros((len(samples), N), dtype=np.int64)
    bounds = np.zeros((len(samples), N), dtype=np.int64)
    if with_labels:
        for b, s in enumerate(samples):
            labels[b, :lengths[b]] = [_LABEL_ID[l] for l in s.labels]
            bounds[b, :lengths[b]] = [_BOUNDARY_ID[z] for z in decompose_boundaries(s.labels)]
    return Batch(CellBatch.from_lattices(lattices), lengths, labels, bounds,
                 list(range(len(samples))) if indices is None else list(indices))


def batch(samples, vocab: Vocab, max_len=128, batch_size=16, seed=None, use_objects=True,
          with_labels=True) -> list[Batch]:
    """Split into padded batches.  With ``seed`` the order is shuffled by a
    generator seeded with it; without, sample order is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    samples = [truncate(s, max_len) for s in samples]
    order = np.arange(len(samples))
    if seed is not None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        order = rng.permutation(len(samples))
    out = []
    for i in range(0, len(samples), batch_size):
        idx = [int(j) for j in order[i:i + batch_size]]
        out.append(make_batch([samples[j] for j in idx], vocab, idx, use_objects, with_labels))
    return out
