"""Central finite-difference gradient checks.

``grad_check`` compares backpropagated gradients of a scalar loss with
central differences, per parameter tensor.  ``check_ops`` does the same for
every registered backward rule in isolation (random small inputs, loss is a
fixed random projection of the op output), so a broken rule is pinned to
its op.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autograd as ag
from . import crf as crf_mod


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    checked: int
    passed: bool
    nan: bool = False


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def failures(self) -> list[str]:
        return [e.name for e in self.entries if not e.passed]

    def to_text(self) -> str:
        width = max([len(e.name) for e in self.entries] + [4])
        lines = [f"{'name'.ljust(width)}  {'max_rel_err':>12}  {'checked':>7}  status"]
        for e in self.entries:
            status = "NaN" if e.nan else ("ok" if e.passed else "FAIL")
            lines.append(f"{e.name.ljust(width)}  {e.max_rel_err:12.3e}  {e.checked:7d}  {status}")
        lines.append(f"{'overall'.ljust(width)}  {max([e.max_rel_err for e in self.entries] + [0.0]):12.3e}"
                     f"  {sum(e.checked for e in self.entries):7d}  {'ok' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def relative_error(analytic, numeric, floor=1e-8) -> float:
    """Worst absolute disagreement scaled by the tensor's gradient magnitude:
    ``max|a - n| / max(max|a|, max|n|, floor)``.

    Per-entry ratios are meaningless for entries whose true gradient is below
    the finite-difference rounding noise, so the scale is taken per tensor.
    Non-finite input gives ``inf``.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
        return float("inf")
    if a.size == 0:
        return 0.0
    scale = max(float(np.abs(a).max()), float(np.abs(n).max()), floor)
    return float(np.abs(a - n).max() / scale)


def _choose(size, max_entries, analytic, rng):
    if max_entries is None or size <= max_entries:
        return np.arange(size)
    flat = np.abs(analytic.ravel())
    top = np.argsort(-flat, kind="stable")[: max_entries // 2]
    rest = np.setdiff1d(np.arange(size), top)
    extra = rng.choice(rest, size=max_entries - len(top), replace=False)
    return np.sort(np.concatenate([top, extra]))


def grad_check(loss_fn: Callable[[], ag.Tensor], params: dict[str, ag.Tensor], tolerance=1e-4,
               step=1e-5, max_entries=None, floor=1e-8, seed=0) -> GradCheckReport:
    """Check every tensor in ``params``; ``loss_fn`` must rebuild the graph
    from the current parameter values on each call."""
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ValueError(f"gradient check needs float64 parameters; {name} is {p.dtype}")
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    ag.backward(loss)
    report = GradCheckReport(tolerance)
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        if not np.all(np.isfinite(analytic)) or not np.isfinite(float(loss.data)):
            report.entries.append(ParamCheck(name, float("nan"), 0, False, nan=True))
            continue
        idx = _choose(p.data.size, max_entries, analytic, rng)
        flat = p.data.reshape(-1)
        numeric = np.empty(len(idx))
        for i, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + step
            up = float(loss_fn().data)
            flat[k] = orig - step
            down = float(loss_fn().data)
            flat[k] = orig
            numeric[i] = (up - down) / (2 * step)
        if not np.all(np.isfinite(numeric)):
            report.entries.append(ParamCheck(name, float("nan"), len(idx), False, nan=True))
            continue
        err = relative_error(analytic.reshape(-1)[idx], numeric, floor)
        report.entries.append(ParamCheck(name, err, len(idx), err <= tolerance))
    for p in params.values():
        p.grad = None
    return report


# ---------------------------------------------------------------- op-level checks

def _away_from_zero(rng, shape):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 1.0, size=shape)


def _dropout_case(rng):
    seed = int(rng.integers(1 << 30))
    return (lambda x: ag.dropout(x, 0.3, np.random.default_rng(seed), True)), [rng.normal(size=(3, 5))]


def _softmax_case(rng):
    mask = rng.random((2, 3, 6)) > 0.3
    mask[..., 0] = True
    return (lambda x: ag.masked_softmax(x, mask)), [rng.normal(size=(2, 3, 6))]


def _crf_partition_case(rng):
    lengths = np.array([4, 2, 1])

    def fn(E, T, s, t):
        return crf_mod._batch_log_partition(E, T, s, t, lengths)
    return fn, [rng.normal(size=(3, 4, 3)), rng.normal(size=(3, 3)), rng.normal(size=3), rng.normal(size=3)]


def _crf_gold_case(rng):
    lengths = np.array([4, 2])
    labels = rng.integers(0, 3, size=(2, 4))

    def fn(E, T, s, t):
        return crf_mod._batch_gold_score(E, T, s, t, labels, lengths)
    return fn, [rng.normal(size=(2, 4, 3)), rng.normal(size=(3, 3)), rng.normal(size=3), rng.normal(size=3)]


OP_CASES: dict[str, Callable] = {
    "add": lambda r: (ag.add, [r.normal(size=(3, 4)), r.normal(size=(4,))]),
    "sub": lambda r: (ag.sub, [r.normal(size=(2, 3, 4)), r.normal(size=(3, 1))]),
    "mul": lambda r: (ag.mul, [r.normal(size=(3, 4)), r.normal(size=(1, 4))]),
    "scale": lambda r: ((lambda x: ag.scale(x, -1.7)), [r.normal(size=(2, 3))]),
    "relu": lambda r: (ag.relu, [_away_from_zero(r, (4, 5))]),
    "matmul": lambda r: (ag.matmul, [r.normal(size=(2, 3, 4)), r.normal(size=(4, 5))]),
    "einsum": lambda r: ((lambda a, b: ag.einsum("bihk,bijhk->bhij", a, b)),
                         [r.normal(size=(2, 3, 2, 2)), r.normal(size=(2, 3, 3, 2, 2))]),
    "reshape": lambda r: ((lambda x: ag.reshape(x, (6, 2))), [r.normal(size=(3, 4))]),
    "transpose": lambda r: ((lambda x: ag.transpose(x, (2, 0, 1))), [r.normal(size=(2, 3, 4))]),
    "take": lambda r: ((lambda x: ag.take(x, (np.array([0, 2, 0]), np.array([1, 1, 1])))), [r.normal(size=(3, 4))]),
    "concat": lambda r: ((lambda a, b: ag.concat([a, b], axis=1)), [r.normal(size=(2, 3)), r.normal(size=(2, 2))]),
    "gather": lambda r: ((lambda t: ag.gather(t, np.array([[0, 3, 3], [1, 0, 2]]))), [r.normal(size=(4, 5))]),
    "sum": lambda r: ((lambda x: ag.sum_(x, axis=1)), [r.normal(size=(3, 4, 2))]),
    "masked_softmax": _softmax_case,
    "layer_norm": lambda r: (ag.layer_norm, [r.normal(size=(2, 3, 6)), r.normal(size=6), r.normal(size=6)]),
    "dropout": _dropout_case,
    "crf_log_partition": _crf_partition_case,
    "crf_gold_score": _crf_gold_case,
}


def check_op(name: str, tolerance=1e-6, step=1e-5, seed=0) -> ParamCheck:
    rng = np.random.default_rng(seed)
    fn, inputs = OP_CASES[name](rng)
    with ag.precision("float64"):
        tensors = [ag.Tensor(np.asarray(x, dtype=np.float64), requires_grad=True) for x in inputs]
        out = fn(*tensors)
        weights = rng.normal(size=out.shape)
        ag.backward(out, weights)
        worst, checked = 0.0, 0
        for t in tensors:
            analytic = np.zeros_like(t.data) if t.grad is None else t.grad
            flat = t.data.reshape(-1)
            numeric = np.empty(flat.size)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                up = float((fn(*tensors).data * weights).sum())
                flat[k] = orig - step
                down = float((fn(*tensors).data * weights).sum())
                flat[k] = orig
                numeric[k] = (up - down) / (2 * step)
            worst = max(worst, relative_error(analytic, numeric))
            checked += flat.size
    return ParamCheck(name, worst, checked, worst <= tolerance, nan=not np.isfinite(worst))


def check_ops(tolerance=1e-6, seed=0) -> GradCheckReport:
    report = GradCheckReport(tolerance)
    for name in OP_CASES:
        report.entries.append(check_op(name, tolerance, seed=seed))
    return report


# ---------------------------------------------------------------- whole-model problem

def model_problem(d=16, layers=1, heads=2, lam=0.25, seed=0, samples=None):
    """A joint-loss closure over a tiny float64 model for gradient checking.

    Defaults to one four-word sentence with two objects (whole image plus a
    phrase).  Every parameter is jittered so zero-initialized ones are not
    checked at a degenerate point.  Returns ``(loss_fn, params)``.
    """
    from .data import ObjectRecord, Sample, Vocab, make_batch
    from .lattice import ObjectKind
    from .model import FMIT, ModelConfig
    from .trainer import compute_loss

    if samples is None:
        samples = [Sample(["a", "b", "c", "d"], ["B-PER", "I-PER", "O", "B-LOC"],
                          [ObjectRecord("scene:PER:0", ObjectKind.WHOLE_IMAGE),
                           ObjectRecord("obj:PER:1", ObjectKind.NOUN_PHRASE, (1, 2))])]
    vocab = Vocab.build(samples)
    cfg = ModelConfig(word_vocab_size=len(vocab.words), object_vocab_size=len(vocab.concepts),
                      d=d, heads=heads, layers=layers, dropout=0.0)
    with ag.precision("float64"):
        model = FMIT.init(cfg, seed)
    params = model.parameters()
    rng = np.random.default_rng(seed + 1)
    for p in params.values():
        p.data += 0.1 * rng.normal(size=p.shape)
    b = make_batch(samples, vocab)

    def loss_fn():
        return compute_loss(model, b, lam)[0]
    return loss_fn, params
