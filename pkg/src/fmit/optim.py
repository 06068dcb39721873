from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor


@dataclass
class AdamState:
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class Adam:
    """Adam with bias correction over a name -> Tensor parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm: float | None = None):
        self.params = params
        self.state = AdamState(lr, beta1, beta2, eps)
        self.clip_norm = clip_norm
        for name, p in params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        grads = {n: p.grad for n, p in self.params.items()}
        if self.clip_norm is not None:
            total = np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values() if g is not None))
            if total > self.clip_norm:
                factor = self.clip_norm / total
                grads = {n: None if g is None else g * g.dtype.type(factor) for n, g in grads.items()}
        adam_step(self.params, grads, self.state)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray | None], state: AdamState) -> None:
    """One in-place Adam update.  A missing grad counts as zero."""
    if state.step < 0:
        raise ValueError("Adam step counter must be non-negative")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        m, v = state.m[name], state.v[name]
        if m.shape != p.shape or v.shape != p.shape:
            raise ValueError(f"Adam state for {name!r} has shape {m.shape}, parameter {p.shape}")
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        dt = p.data.dtype.type
        m *= dt(b1)
        m += dt(1.0 - b1) * g
        v *= dt(b2)
        v += dt(1.0 - b2) * (g * g)
        mhat = m / dt(c1)
        vhat = v / dt(c2)
        p.data -= dt(state.learning_rate) * mhat / (np.sqrt(vhat) + dt(state.epsilon))
