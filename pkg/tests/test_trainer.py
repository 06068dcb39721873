import json

import numpy as np
import pytest

from fmit import autograd as ag
from fmit import trainer as tr
from fmit.crf import BIO_LABELS, BOUNDARY_LABELS, nll
from fmit.data import GeneratorSpec, Sample, Vocab, generate_corpus, make_batch, to_lattice, write_corpus
from fmit.ebd import decompose_boundaries
from fmit.model import FMIT, TEXT_ONLY
from fmit.trainer import TrainConfig


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(GeneratorSpec(seed=0, types=("PER", "LOC"), train_size=24, dev_size=8, test_size=8))


def tiny(**kw):
    base = dict(epochs=2, batch_size=8, d=8, heads=2, layers=1, lr=1e-3, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def test_two_sample_smoke(corpus):
    result = tr.train(tiny(epochs=1), corpus["train"][:2])
    assert len(result.log) == 1 and np.isfinite(result.log[0].train_loss)
    assert result.log_text().count("\t") == 4


def test_first_batch_loss_matches_module_calls(corpus):
    samples = corpus["train"][:5]
    config = tiny(epochs=1, batch_size=5, dropout=0.0, lam=0.25)
    result = tr.train(config, samples)
    # rebuild the untrained model and score each sentence separately
    vocab = Vocab.build(samples)
    model = FMIT.init(config.model_config(vocab), tr.make_streams(config.seed).init_seed)
    total = 0.0
    for s in samples:
        lat = to_lattice(s, vocab)
        main = nll(model.forward_lattice(lat), model.main.crf, [BIO_LABELS.index(t) for t in s.labels])
        ebd = nll(model.forward_lattice(lat, TEXT_ONLY), model.ebd.crf,
                  [BOUNDARY_LABELS.index(t) for t in decompose_boundaries(s.labels)])
        total += main.item() + 0.25 * ebd.item()
    assert result.log[0].train_loss * len(samples) == pytest.approx(total, rel=1e-5)


def test_lambda_zero_matches_no_ebd_on_main_tower(corpus):
    a = tr.train(tiny(lam=0.0), corpus["train"])
    b = tr.train(tiny(no_ebd=True), corpus["train"])
    pa, pb = a.model.parameters(), b.model.parameters()
    for name in b.model.main_parameter_names():
        assert pa[name].data.tobytes() == pb[name].data.tobytes(), name
    assert a.log_text() == b.log_text()


def test_same_seed_same_checkpoint(corpus, tmp_path):
    for name in ("a", "b"):
        r = tr.train(tiny(), corpus["train"], corpus["dev"])
        tr.save_model(tmp_path / name, r.model, r.vocab, r.config)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_checkpoint_round_trip_preserves_predictions(corpus, tmp_path):
    r = tr.train(tiny(precision="float64"), corpus["train"], corpus["dev"])
    before = tr.predict(r.model, r.vocab, corpus["test"])
    tr.save_model(tmp_path / "m", r.model, r.vocab, r.config)
    model, vocab, config = tr.load_model(tmp_path / "m")
    assert config == r.config and vocab == r.vocab
    assert tr.predict(model, vocab, corpus["test"]) == before
    rep1 = tr.evaluate_samples(model, vocab, corpus["test"])
    rep2 = tr.evaluate_samples(model, vocab, corpus["test"])
    assert rep1.to_kv() == rep2.to_kv()


def test_untrained_model_scores_low(corpus):
    vocab = Vocab.build(corpus["train"])
    model = FMIT.init(tiny().model_config(vocab), 0)
    assert tr.evaluate_samples(model, vocab, corpus["test"]).f1 < 0.2


def test_non_finite_loss_raises(corpus, monkeypatch):
    real = tr.compute_loss
    calls = []

    def poisoned(*args, **kw):
        total, main, ebd = real(*args, **kw)
        calls.append(1)
        if len(calls) == 2:
            total = total * np.nan
        return total, main, ebd
    monkeypatch.setattr(tr, "compute_loss", poisoned)
    with pytest.raises(tr.NumericError, match="epoch 1, batch 2"):
        tr.train(tiny(), corpus["train"])


def test_decode_file(corpus, tmp_path):
    r = tr.train(tiny(epochs=1), corpus["train"])
    tr.save_model(tmp_path / "m", r.model, r.vocab, r.config)
    samples = corpus["test"] + [Sample(["never", "seen"], ["O", "O"])]
    write_corpus(tmp_path / "in.jsonl", samples)
    assert tr.decode_file(tmp_path / "m", tmp_path / "in.jsonl", tmp_path / "out.jsonl") == len(samples)
    rows = [json.loads(line) for line in (tmp_path / "out.jsonl").read_text().splitlines()]
    for row, s in zip(rows, samples):
        assert len(row["pred_labels"]) == len(s.tokens) and row["tokens"] == s.tokens
        assert all(t in BIO_LABELS for t in row["pred_labels"])


def test_layer_counts_and_ablations_run(corpus):
    for kw in (dict(layers=2), dict(no_rel=True), dict(no_objects=True), dict(no_transitions=True),
               dict(share_ebd_tower=True), dict(share_word_embeddings=False)):
        r = tr.train(tiny(epochs=1, **kw), corpus["train"][:8])
        assert np.isfinite(r.log[0].train_loss), kw


def test_precision_is_global_setting(corpus):
    r = tr.train(tiny(epochs=1, precision="float64"), corpus["train"][:4])
    assert all(p.dtype == np.float64 for p in r.model.parameters().values())
    ag.set_precision("float32")


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(lam=-1)
    with pytest.raises(ValueError, match="precision"):
        TrainConfig(precision="half")
