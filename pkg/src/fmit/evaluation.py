"""BIO span extraction and exact-match precision / recall / F1."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .crf import ENTITY_TYPES


class EntitySpan(NamedTuple):
    first: int
    last: int
    type: str


def _split(tag: str):
    if tag == "O":
        return "O", None
    prefix, sep, etype = tag.partition("-")
    if not sep or prefix not in ("B", "I") or not etype:
        raise ValueError(f"not a BIO tag: {tag!r}")
    return prefix, etype


def check_bio(labels) -> None:
    """Reject ill-formed gold BIO: an I-X must follow B-X or I-X."""
    prev = None
    for i, tag in enumerate(labels):
        prefix, etype = _split(tag)
        if prefix == "I" and prev != etype:
            raise ValueError(f"ill-formed BIO at position {i + 1}: {tag!r} after {labels[i - 1] if i else 'start'!r}")
        prev = etype if prefix != "O" else None


def extract_spans(labels) -> set[EntitySpan]:
    """Maximal ``B-X (I-X)*`` runs as 1-based spans.

    Repair rule: an ``I-X`` with no open X entity opens a new X span, so
    decoder output that is not well-formed still yields spans.
    """
    spans = set()
    start, cur = None, None
    for i, tag in enumerate(labels, 1):
        prefix, etype = _split(tag)
        if prefix == "I" and cur == etype:
            continue
        if cur is not None:
            spans.add(EntitySpan(start, i - 1, cur))
        start, cur = (i, etype) if prefix != "O" else (None, None)
    if cur is not None:
        spans.add(EntitySpan(start, len(labels), cur))
    return spans


def spans_to_bio(spans: Iterable[EntitySpan], n: int) -> list[str]:
    labels = ["O"] * n
    for s in sorted(spans):
        labels[s.first - 1] = f"B-{s.type}"
        for k in range(s.first, s.last):
            labels[k] = f"I-{s.type}"
    return labels


def _prf(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class TypeScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def support(self):
        return self.tp + self.fn

    @property
    def prf(self):
        return _prf(self.tp, self.fp, self.fn)


@dataclass
class MetricsReport:
    per_type: dict[str, TypeScore] = field(default_factory=dict)
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self):
        return _prf(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self):
        return _prf(self.tp, self.fp, self.fn)[1]

    @property
    def f1(self):
        return _prf(self.tp, self.fp, self.fn)[2]

    def to_table(self) -> str:
        rows = [("type", "P", "R", "F1", "support")]
        for t, s in self.per_type.items():
            p, r, f = s.prf
            rows.append((t, f"{p:.4f}", f"{r:.4f}", f"{f:.4f}", str(s.support)))
        rows.append(("overall", f"{self.precision:.4f}", f"{self.recall:.4f}", f"{self.f1:.4f}",
                     str(self.tp + self.fn)))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        return "\n".join("  ".join(v.rjust(w) if i else v.ljust(w) for i, (v, w) in enumerate(zip(r, widths)))
                         for r in rows)

    def to_kv(self) -> str:
        lines = [f"overall.precision={self.precision!r}", f"overall.recall={self.recall!r}",
                 f"overall.f1={self.f1!r}", f"overall.tp={self.tp}", f"overall.fp={self.fp}",
                 f"overall.fn={self.fn}"]
        for t, s in self.per_type.items():
            p, r, f = s.prf
            lines += [f"{t}.precision={p!r}", f"{t}.recall={r!r}", f"{t}.f1={f!r}", f"{t}.support={s.support}"]
        return "\n".join(lines) + "\n"


def score(gold, pred, types=ENTITY_TYPES) -> MetricsReport:
    """Exact-match scoring.  ``gold``/``pred`` are one span set, or parallel
    lists of per-sentence span sets.  Micro-averaged overall."""
    if isinstance(gold, (set, frozenset)):
        gold, pred = [gold], [pred]
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    per = {t: TypeScore() for t in types}
    report = MetricsReport(per)
    for g, p in zip(gold, pred):
        g, p = set(g), set(p)
        for s in g | p:
            ts = per.setdefault(s.type, TypeScore())
            if s in g and s in p:
                ts.tp += 1
            elif s in p:
                ts.fp += 1
            else:
                ts.fn += 1
    report.tp = sum(s.tp for s in per.values())
    report.fp = sum(s.fp for s in per.values())
    report.fn = sum(s.fn for s in per.values())
    return report
