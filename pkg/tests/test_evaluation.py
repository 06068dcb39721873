import pytest
from hypothesis import given
from hypothesis import strategies as st

from fmit.evaluation import EntitySpan, check_bio, extract_spans, score, spans_to_bio


def test_extraction_examples():
    assert extract_spans(["O", "B-PER", "I-PER", "O"]) == {EntitySpan(2, 3, "PER")}
    assert extract_spans(["I-LOC", "O"]) == {EntitySpan(1, 1, "LOC")}
    assert extract_spans(["O", "O"]) == set()
    assert extract_spans(["B-PER", "I-LOC", "I-LOC"]) == {EntitySpan(1, 1, "PER"), EntitySpan(2, 3, "LOC")}
    assert extract_spans(["B-PER", "B-PER"]) == {EntitySpan(1, 1, "PER"), EntitySpan(2, 2, "PER")}


def test_bad_tags():
    with pytest.raises(ValueError, match="BIO tag"):
        extract_spans(["X-PER"])
    with pytest.raises(ValueError, match="ill-formed"):
        check_bio(["B-PER", "I-LOC"])
    check_bio(["B-PER", "I-PER", "O", "B-LOC"])


def test_scores():
    gold = {EntitySpan(1, 2, "PER")}
    r = score(gold, gold | {EntitySpan(4, 4, "LOC")})
    assert (r.precision, r.recall) == (0.5, 1.0)
    assert r.f1 == pytest.approx(2 / 3)
    r = score(gold, gold)
    assert r.precision == r.recall == r.f1 == 1.0
    r = score(gold, set())
    assert r.precision == r.recall == r.f1 == 0.0


def test_per_sentence_lists_do_not_cross_match():
    gold = [{EntitySpan(1, 1, "PER")}, set()]
    pred = [set(), {EntitySpan(1, 1, "PER")}]
    r = score(gold, pred)
    assert (r.tp, r.fp, r.fn) == (0, 1, 1)
    with pytest.raises(ValueError):
        score(gold, pred[:1])


def test_report_formats():
    r = score([{EntitySpan(1, 2, "PER"), EntitySpan(3, 3, "LOC")}], [{EntitySpan(1, 2, "PER")}])
    table = r.to_table().splitlines()
    assert table[0].split() == ["type", "P", "R", "F1", "support"]
    assert table[-1].split()[0] == "overall" and table[-1].split()[-1] == "2"
    kv = dict(line.split("=") for line in r.to_kv().splitlines())
    assert float(kv["overall.precision"]) == 1.0 and float(kv["overall.recall"]) == 0.5
    assert kv["PER.support"] == "1" and kv["LOC.support"] == "1"


@st.composite
def span_sets(draw):
    n = draw(st.integers(1, 15))
    spans, pos = set(), 1
    while pos <= n:
        if draw(st.booleans()):
            last = draw(st.integers(pos, n))
            spans.add(EntitySpan(pos, last, draw(st.sampled_from(["PER", "LOC", "ORG", "MISC"]))))
            pos = last + 1
        else:
            pos += 1
    return n, spans


@given(span_sets())
def test_bio_round_trip(case):
    n, spans = case
    labels = spans_to_bio(spans, n)
    check_bio(labels)
    assert extract_spans(labels) == spans
