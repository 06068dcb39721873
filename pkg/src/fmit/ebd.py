"""Entity boundary detection: boundary labels and the joint objective."""
from __future__ import annotations

from dataclasses import dataclass

from . import autograd as ag
from .evaluation import check_bio, extract_spans


@dataclass(frozen=True)
class JointLossConfig:
    lam: float = 0.25

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")


def decompose_boundaries(labels) -> list[str]:
    """Strip types from gold BIO: entity head -> B, tail of a multi-token
    entity -> E, everything else O.  A single-token entity is just B."""
    check_bio(labels)
    out = ["O"] * len(labels)
    for span in extract_spans(labels):
        out[span.first - 1] = "B"
        if span.last > span.first:
            out[span.last - 1] = "E"
    return out


def joint_loss(nll_main, nll_ebd, config: JointLossConfig):
    """``nll_main + lam * nll_ebd`` (both already summed over the batch)."""
    if nll_ebd is None:
        return nll_main
    return ag.add(nll_main, ag.scale(nll_ebd, config.lam))
