"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
collected into an "acceptance criteria" section at the end of any run.
"""
import time

import numpy as np
import pytest
from conftest import record

from fmit import autograd as ag
from fmit import kernels
from fmit import trainer as tr
from fmit.crf import CrfParams, brute_force_oracle, log_partition, sequence_score, viterbi
from fmit.data import GeneratorSpec, generate_corpus
from fmit.gradcheck import grad_check, model_problem
from fmit.posenc import distance_arrays, relative_encoding_from_spans
from fmit.trainer import TrainConfig

# 32-sample corpus used by the overfit, determinism and layer-count checks
OVERFIT_DATA = GeneratorSpec(seed=0, train_size=32, dev_size=0, test_size=0)
OVERFIT = dict(d=32, heads=4, layers=2, epochs=500, stop_at_dev_f1=1.0, seed=0)

# two types, half of each type's surfaces shared with the other type
UTILITY_DATA = dict(types=("PER", "LOC"), ambiguity=0.5, train_size=400, dev_size=100, test_size=300)
UTILITY = dict(epochs=15, lr=1e-3)

# every sample gets a decoy phrase object on a non-entity word
BIAS_DATA = dict(visual_bias=1.0, p_phrase=1.0, train_size=200, dev_size=50, test_size=200)
BIAS = dict(epochs=20, lr=1e-3)


@pytest.fixture(scope="module")
def overfit_corpus():
    return generate_corpus(OVERFIT_DATA)["train"]


# ---------------------------------------------------------------- 1

def test_criterion_1_crf_oracle():
    rng = np.random.default_rng(2024)
    cases = []
    for _ in range(200):
        n, K = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        with ag.precision("float64"):
            p = CrfParams.init(K, K, rng)
        p.W.data = np.eye(K)
        for t in (p.transitions, p.start, p.stop):
            t.data = rng.normal(size=t.shape)
        cases.append((rng.normal(size=(n, K)) * 2, p))
    old = kernels.BACKEND
    details, ok = [], True
    try:
        for name in sorted(kernels.BACKENDS):
            kernels.use_backend(name)
            start = time.perf_counter()
            worst_z, worst_v, bad_path = 0.0, 0.0, 0
            for E, p in cases:
                log_z, _, best = brute_force_oracle(E, *p.pairwise_arrays())
                worst_z = max(worst_z, abs(log_partition(E, p).item() - log_z))
                path, score = viterbi(E, p)
                worst_v = max(worst_v, abs(score - best))
                bad_path += abs(sequence_score(E, p, path).item() - best) > 1e-8
            elapsed = time.perf_counter() - start
            ok &= worst_z <= 1e-8 and worst_v <= 1e-8 and bad_path == 0 and elapsed < 10
            details.append(f"{name}: max|dlogZ|={worst_z:.1e} max|dViterbi|={worst_v:.1e} {elapsed:.2f}s")
    finally:
        kernels.use_backend(old)
    record(1, ok, "200 cases n<=6 K<=5; " + "; ".join(details))
    assert ok


# ---------------------------------------------------------------- 2

def test_criterion_2_gradient_integrity():
    start = time.perf_counter()
    loss_fn, params = model_problem(d=16, layers=1, heads=2)
    report = grad_check(loss_fn, params, tolerance=1e-4, step=1e-5)
    elapsed = time.perf_counter() - start
    worst = max(e.max_rel_err for e in report.entries)
    ok = report.passed and elapsed < 60
    record(2, ok, f"{len(report.entries)} tensors, {sum(e.checked for e in report.entries)} entries, "
                  f"max rel err {worst:.2e} (<= 1e-4), {elapsed:.1f}s (< 60s)")
    assert ok, report.to_text()


# ---------------------------------------------------------------- 3

def test_criterion_3_position_invariants():
    rng = np.random.default_rng(3)
    d = 16
    heads = np.array([0, 1, 2, 3, 4, 5, 6, 1, 3, 1])
    tails = np.array([0, 1, 2, 3, 4, 5, 6, 5, 4, 5])
    W = ag.Tensor(rng.normal(size=(d, 4 * d)))
    base = relative_encoding_from_spans(heads, tails, W).data
    translation = all(relative_encoding_from_spans(heads + s, tails + s, W).data.tobytes() == base.tobytes()
                      for s in (-3, 1, 7, 100))

    hh, ht, th, tt = distance_arrays(heads, tails)
    words = slice(1, 6)
    collapse = all(np.array_equal(hh[words, words], x[words, words]) for x in (ht, th, tt))
    antisym = np.array_equal(hh, -hh.T) and np.array_equal(ht, -th.T)

    directional = True
    for seed in range(20):
        Wk = ag.Tensor(np.random.default_rng(seed).normal(size=(d, 4 * d)))
        for k in range(1, 6):
            pair = relative_encoding_from_spans(np.array([0, k]), np.array([0, k]), Wk).data
            directional &= not np.array_equal(pair[1, 0], pair[0, 1])  # distance +k vs -k
    ok = translation and collapse and antisym and directional
    record(3, ok, f"translation bitwise={translation} word collapse={collapse} "
                  f"antisymmetry={antisym} R(+k)!=R(-k) k=1..5 x 20 projections={directional}")
    assert ok


# ---------------------------------------------------------------- 4

def test_criterion_4_overfit(overfit_corpus):
    start = time.perf_counter()
    result = tr.train(TrainConfig(**OVERFIT), overfit_corpus)
    elapsed = time.perf_counter() - start
    f1 = tr.evaluate_samples(result.model, result.vocab, overfit_corpus).f1
    ok = f1 == 1.0 and len(result.log) <= 500 and elapsed < 300
    record(4, ok, f"train F1 {f1:.4f} after {len(result.log)} epochs (<= 500), {elapsed:.1f}s (< 300s)")
    assert ok


# ---------------------------------------------------------------- 5

def test_criterion_5_multimodal_utility():
    rows, ok = [], True
    for seed in range(3):
        splits = generate_corpus(GeneratorSpec(seed=seed, **UTILITY_DATA))
        scores = {}
        for name, flag in (("fmit", False), ("no_objects", True)):
            r = tr.train(TrainConfig(seed=seed, no_objects=flag, **UTILITY), splits["train"], splits["dev"])
            scores[name] = tr.evaluate_samples(r.model, r.vocab, splits["test"], use_objects=not flag).f1
        ok &= scores["fmit"] >= 0.95 and scores["no_objects"] <= 0.80
        rows.append(f"seed {seed}: fmit {scores['fmit']:.4f} no_objects {scores['no_objects']:.4f}")
    record(5, ok, "test F1 (need fmit >= 0.95, no_objects <= 0.80); " + "; ".join(rows))
    assert ok


# ---------------------------------------------------------------- 6

def test_criterion_6_ebd_effect():
    wins, rows = 0, []
    for seed in range(10):
        splits = generate_corpus(GeneratorSpec(seed=seed, **BIAS_DATA))
        prec = {}
        for name, flag in (("ebd", False), ("no_ebd", True)):
            r = tr.train(TrainConfig(seed=seed, no_ebd=flag, **BIAS), splits["train"], splits["dev"])
            prec[name] = tr.evaluate_samples(r.model, r.vocab, splits["test"]).precision
        wins += prec["ebd"] >= prec["no_ebd"]
        rows.append(f"{prec['ebd']:.3f}/{prec['no_ebd']:.3f}")

    small = generate_corpus(GeneratorSpec(seed=0, **dict(BIAS_DATA, train_size=40, dev_size=10)))
    a = tr.train(TrainConfig(seed=1, lam=0.0, epochs=3, lr=1e-3), small["train"], small["dev"])
    b = tr.train(TrainConfig(seed=1, no_ebd=True, epochs=3, lr=1e-3), small["train"], small["dev"])
    pa, pb = a.model.parameters(), b.model.parameters()
    identical = all(pa[k].data.tobytes() == pb[k].data.tobytes() for k in b.model.main_parameter_names())
    ok = wins >= 7 and identical
    record(6, ok, f"EBD precision >= no-EBD in {wins}/10 seeds (need 7) [ebd/no_ebd: {' '.join(rows)}]; "
                  f"lambda=0 main tower bitwise equal to no_ebd: {identical}")
    assert ok


# ---------------------------------------------------------------- 7

def test_criterion_7_determinism_and_persistence(overfit_corpus, tmp_path):
    config = TrainConfig(**dict(OVERFIT, epochs=5, stop_at_dev_f1=None))
    runs = [tr.train(config, overfit_corpus) for _ in range(2)]
    same_log = runs[0].log_text() == runs[1].log_text()
    reports = [tr.evaluate_samples(r.model, r.vocab, overfit_corpus).to_kv() for r in runs]
    same_metrics = reports[0] == reports[1]
    for name, r in zip("ab", runs):
        tr.save_model(tmp_path / name, r.model, r.vocab, r.config)
    same_bytes = (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    model, vocab, _ = tr.load_model(tmp_path / "a")
    before = tr.predict(runs[0].model, runs[0].vocab, overfit_corpus)
    reloaded = tr.predict(model, vocab, overfit_corpus) == before
    reloaded &= tr.evaluate_samples(model, vocab, overfit_corpus).to_kv() == reports[0]
    ok = same_log and same_metrics and same_bytes and reloaded
    record(7, ok, f"two runs: identical log={same_log} metrics={same_metrics} checkpoint bytes={same_bytes}; "
                  f"save/load evaluation identical={reloaded}")
    assert ok


# ---------------------------------------------------------------- 8

def test_criterion_8_layer_counts(overfit_corpus):
    rows, ok = [], True
    for layers in (1, 2, 3):
        r = tr.train(TrainConfig(**dict(OVERFIT, layers=layers, epochs=30)), overfit_corpus)
        report = tr.evaluate_samples(r.model, r.vocab, overfit_corpus)
        finite = all(np.isfinite(e.train_loss) for e in r.log)
        ok &= finite and 0.0 <= report.f1 <= 1.0
        rows.append(f"l={layers}: {len(r.log)} epochs, final loss {r.log[-1].train_loss:.3f}, F1 {report.f1:.3f}")
    record(8, ok, "; ".join(rows))
    assert ok
