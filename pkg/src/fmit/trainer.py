"""Training loop, evaluation, decoding and model checkpoints."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autograd as ag
from .checkpoint import load_checkpoint, save_checkpoint
from .crf import BIO_LABELS, batch_nll, batch_viterbi, emissions
from .data import Batch, Sample, Vocab, batch, read_corpus, write_corpus
from .ebd import JointLossConfig, joint_loss
from .evaluation import MetricsReport, extract_spans, score
from .model import FMIT, ModelConfig
from .optim import Adam

log = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    max_len: int = 128
    lr: float = 2e-4
    dropout: float = 0.2
    lam: float = 0.25
    seed: int = 0
    no_rel: bool = False
    no_ebd: bool = False
    no_objects: bool = False
    no_transitions: bool = False
    precision: str = "float32"
    clip_norm: float | None = None
    d: int = 32
    heads: int = 4
    layers: int = 2
    d_w: int = 16
    d_v: int = 16
    share_word_embeddings: bool = True
    share_ebd_tower: bool = False
    stop_at_dev_f1: float | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.max_len < 1:
            raise ValueError("epochs, batch_size and max_len must be positive")
        JointLossConfig(self.lam)
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")

    def model_config(self, vocab: Vocab) -> ModelConfig:
        return ModelConfig(
            word_vocab_size=len(vocab.words), object_vocab_size=len(vocab.concepts),
            d=self.d, heads=self.heads, layers=self.layers, d_w=self.d_w, d_v=self.d_v,
            dropout=self.dropout, use_rel=not self.no_rel, transitions=not self.no_transitions,
            ebd=not self.no_ebd, share_word_embeddings=self.share_word_embeddings,
            share_ebd_tower=self.share_ebd_tower)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    dev_p: float
    dev_r: float
    dev_f1: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.train_loss!r}\t{self.dev_p!r}\t{self.dev_r!r}\t{self.dev_f1!r}"


@dataclass
class TrainResult:
    model: FMIT
    vocab: Vocab
    config: TrainConfig
    log: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0

    def log_text(self) -> str:
        return "".join(e.line() + "\n" for e in self.log)


@dataclass
class Streams:
    shuffle: np.random.Generator
    dropout_main: np.random.Generator
    dropout_ebd: np.random.Generator
    init_seed: int


def make_streams(seed: int) -> Streams:
    init, shuffle, dmain, debd = np.random.SeedSequence(seed).spawn(4)
    return Streams(np.random.default_rng(shuffle), np.random.default_rng(dmain),
                   np.random.default_rng(debd), int(init.generate_state(1)[0]))


def compute_loss(model: FMIT, b: Batch, lam: float, train=False, streams: Streams | None = None):
    """``(total, nll_main, nll_ebd)``; ``nll_ebd`` is None without the boundary tower."""
    rng_main = streams.dropout_main if streams else None
    rng_ebd = streams.dropout_ebd if streams else None
    H = model.main_states(b.cells, b.n_max, train, rng_main)
    nll_main = batch_nll(emissions(H, model.main.crf), model.main.crf, b.labels, b.lengths)
    nll_ebd = None
    if model.ebd is not None:
        T = model.ebd_states(b.cells, b.lengths, train, rng_ebd)
        nll_ebd = batch_nll(emissions(T, model.ebd.crf), model.ebd.crf, b.boundaries, b.lengths)
    return joint_loss(nll_main, nll_ebd, JointLossConfig(lam)), nll_main, nll_ebd


def predict(model: FMIT, vocab: Vocab, samples, use_objects=True, batch_size=64, max_len=128):
    """Viterbi BIO labels per sample (eval mode, no dropout)."""
    out = []
    for b in batch(samples, vocab, max_len, batch_size, use_objects=use_objects, with_labels=False):
        H = model.main_states(b.cells, b.n_max)
        paths, _ = batch_viterbi(emissions(H, model.main.crf), model.main.crf, b.lengths)
        out += [[BIO_LABELS[k] for k in p] for p in paths]
    return out


def evaluate_samples(model: FMIT, vocab: Vocab, samples, use_objects=True, max_len=128) -> MetricsReport:
    preds = predict(model, vocab, samples, use_objects, max_len=max_len)
    gold = [extract_spans(s.labels[:max_len]) for s in samples]
    return score(gold, [extract_spans(p) for p in preds])


def train(config: TrainConfig, train_samples, dev_samples=None) -> TrainResult:
    """Minimize ``nll_main + lam * nll_ebd`` with Adam, keeping the best-dev weights."""
    ag.set_precision(config.precision)
    dev_samples = train_samples if dev_samples is None else dev_samples
    use_objects = not config.no_objects
    vocab = Vocab.build(train_samples)
    streams = make_streams(config.seed)
    model = FMIT.init(config.model_config(vocab), streams.init_seed)
    params = model.parameters()
    opt = Adam(params, lr=config.lr, clip_norm=config.clip_norm)
    result = TrainResult(model, vocab, config)
    best_f1, best = -1.0, None
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        batches = batch(train_samples, vocab, config.max_len, config.batch_size,
                        seed=streams.shuffle, use_objects=use_objects)
        for bi, b in enumerate(batches, 1):
            loss, _, _ = compute_loss(model, b, config.lam, True, streams)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss {value} at epoch {epoch}, batch {bi}")
            opt.zero_grad()
            ag.backward(loss)
            opt.step()
            total += value
        report = evaluate_samples(model, vocab, dev_samples, use_objects, config.max_len)
        entry = EpochLog(epoch, total / len(train_samples), report.precision, report.recall, report.f1)
        result.log.append(entry)
        log.info("epoch %d loss %.4f dev P %.4f R %.4f F1 %.4f", epoch, entry.train_loss,
                 entry.dev_p, entry.dev_r, entry.dev_f1)
        if report.f1 > best_f1:
            best_f1, result.best_epoch = report.f1, epoch
            best = {k: t.data.copy() for k, t in params.items()}
        if config.stop_at_dev_f1 is not None and report.f1 >= config.stop_at_dev_f1:
            break
    model.load_arrays(best)
    return result


# ---------------------------------------------------------------- persistence

def save_model(path, model: FMIT, vocab: Vocab, config: TrainConfig | None = None) -> None:
    meta = {"model_config": model.config.to_dict(), "vocab": vocab.to_dict(),
            "train_config": asdict(config) if config else None}
    params = {k: t.data for k, t in model.parameters().items()}
    save_checkpoint(path, params, meta)


def load_model(path):
    """``(model, vocab, train_config_or_None)`` from a checkpoint."""
    arrays, meta, precision = load_checkpoint(path)
    cfg = ModelConfig(**meta["model_config"])
    with ag.precision(precision):
        model = FMIT.init(cfg, 0)
    model.load_arrays(arrays)
    tc = meta.get("train_config")
    return model, Vocab.from_dict(meta["vocab"]), (TrainConfig(**tc) if tc else None)


def decode_file(ckpt_path, input_path, output_path, max_len=128) -> int:
    """Label every sample of ``input_path``; writes records with ``pred_labels``."""
    model, vocab, tc = load_model(ckpt_path)
    use_objects = not (tc and tc.no_objects)
    samples = read_corpus(input_path)
    preds = predict(model, vocab, samples, use_objects, max_len=max_len)
    with open(output_path, "w", encoding="utf-8", newline="\n") as f:
        for s, p in zip(samples, preds):
            rec = s.to_record()
            rec["pred_labels"] = p + ["O"] * (len(s.tokens) - len(p))
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return len(samples)
