"""Flat multimodal interaction transformer and the text-only boundary tower.

Cells are embedded from lookup tables standing in for the pretrained word and
image encoders, projected to a shared width ``d`` (word and visual paths have
their own first layer and share the second), and run through ``layers``
post-norm transformer layers whose attention adds relative-position terms:

    A[i, j] = (q_i + u) . kE_j + (q_i + v) . kR_ij

with ``q = E W_q``, ``kE = E W_kE``, ``kR = R W_kR`` per head.  ``use_rel``
off drops the second term.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from . import crf as crf_mod
from .autograd import Tensor
from .lattice import FlatLattice, Modality
from .posenc import check_dim, relative_encoding_from_spans

MULTIMODAL = "multimodal"
TEXT_ONLY = "text_only"


@dataclass
class ModelConfig:
    word_vocab_size: int = 64
    object_vocab_size: int = 16
    d: int = 32
    heads: int = 4
    layers: int = 2
    d_w: int = 16
    d_v: int = 16
    ffn_dim: int | None = None
    dropout: float = 0.2
    use_rel: bool = True
    transitions: bool = True
    ebd: bool = True
    share_word_embeddings: bool = True
    share_ebd_tower: bool = False
    num_labels: int = len(crf_mod.BIO_LABELS)
    num_boundary_labels: int = len(crf_mod.BOUNDARY_LABELS)

    def __post_init__(self):
        check_dim(self.d)
        if self.heads < 1 or self.d % self.heads:
            raise ValueError(f"d={self.d} is not divisible by heads={self.heads}")
        if self.layers < 1:
            raise ValueError(f"need at least one layer, got {self.layers}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.d

    @property
    def d_head(self) -> int:
        return self.d // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


def _uniform(rng, shape, fan_in):
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


@dataclass
class LayerParams:
    Wq: Tensor
    WkE: Tensor
    WkR: Tensor
    Wv: Tensor
    u: Tensor
    v: Tensor
    Wt: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    Wa: Tensor
    ba: Tensor
    Wb: Tensor
    bb: Tensor
    ln2_g: Tensor
    ln2_b: Tensor

    @classmethod
    def init(cls, cfg: ModelConfig, rng):
        d, f, h, dh = cfg.d, cfg.ffn_dim, cfg.heads, cfg.d_head
        P = ag.parameter
        # per-head d x d_head projections stored side by side as d x d
        return cls(
            Wq=P(_uniform(rng, (d, d), d)), WkE=P(_uniform(rng, (d, d), d)),
            WkR=P(_uniform(rng, (d, d), d)), Wv=P(_uniform(rng, (d, d), d)),
            u=P(np.zeros((h, dh))), v=P(np.zeros((h, dh))),
            Wt=P(_uniform(rng, (d, d), d)),
            ln1_g=P(np.ones(d)), ln1_b=P(np.zeros(d)),
            Wa=P(_uniform(rng, (f, d), d)), ba=P(np.zeros(f)),
            Wb=P(_uniform(rng, (d, f), f)), bb=P(np.zeros(d)),
            ln2_g=P(np.ones(d)), ln2_b=P(np.zeros(d)),
        )


@dataclass
class TowerParams:
    kind: str
    W1: Tensor
    b1: Tensor
    W0: Tensor
    b0: Tensor
    W_r: Tensor
    layers: list
    crf: crf_mod.CrfParams
    W2: Tensor | None = None
    b2: Tensor | None = None

    @classmethod
    def init(cls, cfg: ModelConfig, kind: str, num_labels: int, rng):
        d = cfg.d
        P = ag.parameter
        tower = cls(
            kind=kind,
            W1=P(_uniform(rng, (d, cfg.d_w), cfg.d_w)), b1=P(np.zeros(d)),
            W0=P(_uniform(rng, (d, d), d)), b0=P(np.zeros(d)),
            W_r=P(_uniform(rng, (d, 4 * d), 4 * d)),
            layers=[LayerParams.init(cfg, rng) for _ in range(cfg.layers)],
            crf=crf_mod.CrfParams.init(num_labels, d, rng, transitions=cfg.transitions),
        )
        if kind == MULTIMODAL:
            tower.W2 = P(_uniform(rng, (d, cfg.d_v), cfg.d_v))
            tower.b2 = P(np.zeros(d))
        return tower

    def named(self, encoder=True) -> dict[str, Tensor]:
        out = {}
        if encoder:
            out.update(W1=self.W1, b1=self.b1)
            if self.W2 is not None:
                out.update(W2=self.W2, b2=self.b2)
            out.update(W0=self.W0, b0=self.b0, W_r=self.W_r)
            for i, layer in enumerate(self.layers):
                for k, t in vars(layer).items():
                    out[f"layers.{i}.{k}"] = t
        for k, t in self.crf.named().items():
            out[f"crf.{k}"] = t
        return out


# ---------------------------------------------------------------- building blocks

def linear(x, W, b=None) -> Tensor:
    """``x @ W.T + b`` for weights stored output-major (out x in)."""
    y = ag.matmul(x, ag.transpose(W))
    return y if b is None else y + b


def project_modalities(word_embs, object_embs, params: TowerParams):
    """Map raw word rows (d_w) and object rows (d_v) to the shared width d.

    Returns ``(word_cells, object_cells)``; ``object_cells`` is None when no
    object rows are given.
    """
    word_embs = ag.as_tensor(word_embs)
    if word_embs.shape[-1] != params.W1.shape[1]:
        raise ValueError(f"word embedding width {word_embs.shape[-1]} != {params.W1.shape[1]}")
    xw = linear(ag.relu(linear(word_embs, params.W1, params.b1)), params.W0, params.b0)
    if object_embs is None:
        return xw, None
    object_embs = ag.as_tensor(object_embs)
    if params.W2 is None or object_embs.shape[-1] != params.W2.shape[1]:
        raise ValueError(f"object embedding width {object_embs.shape[-1]} does not fit this tower")
    xv = linear(ag.relu(linear(object_embs, params.W2, params.b2)), params.W0, params.b0)
    return xw, xv


def _heads(x: Tensor, h: int) -> Tensor:
    return ag.reshape(x, x.shape[:-1] + (h, x.shape[-1] // h))


def attention_scores(E, R, layer: LayerParams, heads: int, use_rel=True) -> Tensor:
    """Unscaled scores (B, h, L, L) for cell embeddings E (B, L, d) and R (B, L, L, d)."""
    E = ag.as_tensor(E)
    B, L, d = E.shape
    q = _heads(ag.matmul(E, layer.Wq), heads)
    kE = _heads(ag.matmul(E, layer.WkE), heads)
    scores = ag.einsum("bihk,bjhk->bhij", q + layer.u, kE)
    if use_rel:
        R = ag.as_tensor(R)
        if R.shape != (B, L, L, d):
            raise ValueError(f"R shape {R.shape} does not match embeddings {E.shape}")
        kR = _heads(ag.matmul(R, layer.WkR), heads)
        scores = scores + ag.einsum("bihk,bijhk->bhij", q + layer.v, kR)
    return scores


def multi_head_attention(E, R, layer: LayerParams, heads: int, key_mask, use_rel=True,
                         return_weights=False):
    E = ag.as_tensor(E)
    B, L, d = E.shape
    scores = attention_scores(E, R, layer, heads, use_rel)
    scores = ag.scale(scores, 1.0 / np.sqrt(d // heads))
    mask = np.broadcast_to(np.asarray(key_mask, dtype=bool)[:, None, None, :], scores.shape)
    weights = ag.masked_softmax(scores, mask)
    values = _heads(ag.matmul(E, layer.Wv), heads)
    out = ag.einsum("bhij,bjhk->bihk", weights, values)
    out = linear(ag.reshape(out, (B, L, d)), layer.Wt)
    return (out, weights) if return_weights else out


def transformer_layer(x, R, layer: LayerParams, cfg: ModelConfig, key_mask,
                      train=False, rng=None) -> Tensor:
    x = ag.as_tensor(x)
    att = multi_head_attention(x, R, layer, cfg.heads, key_mask, cfg.use_rel)
    y = ag.layer_norm(x + ag.dropout(att, cfg.dropout, rng, train), layer.ln1_g, layer.ln1_b)
    ffn = linear(ag.relu(linear(y, layer.Wa, layer.ba)), layer.Wb, layer.bb)
    return ag.layer_norm(y + ag.dropout(ffn, cfg.dropout, rng, train), layer.ln2_g, layer.ln2_b)


def encode_cells(cells, tower: TowerParams, word_table: Tensor, object_table: Tensor | None):
    """Cell embeddings (B, L, d) for a padded cell batch."""
    ids, mods = cells.ids, cells.modality
    visual = mods == Modality.VISUAL
    word_ids = np.where(visual, 0, ids)
    word_rows = ag.gather(word_table, word_ids)
    if not visual.any() or object_table is None:
        xw, _ = project_modalities(word_rows, None, tower)
        return xw
    obj_rows = ag.gather(object_table, np.where(visual, ids, 0))
    xw, xv = project_modalities(word_rows, obj_rows, tower)
    vis = visual[..., None].astype(xw.dtype)
    return xw * (1.0 - vis) + xv * vis


def tower_forward(cells, tower: TowerParams, cfg: ModelConfig, word_table, object_table=None,
                  train=False, rng=None) -> Tensor:
    """All final cell states (B, L, d)."""
    x = encode_cells(cells, tower, word_table, object_table)
    R = relative_encoding_from_spans(cells.heads, cells.tails, tower.W_r) if cfg.use_rel else None
    for layer in tower.layers:
        x = transformer_layer(x, R, layer, cfg, cells.mask, train, rng)
    return x


def word_states(H: Tensor, n_max: int) -> Tensor:
    """Slice the word rows 1..n_max out of (B, L, d) cell states."""
    return H[:, 1:n_max + 1]


# ---------------------------------------------------------------- full model

@dataclass
class CellBatch:
    """Padded cell arrays, all (B, L)."""
    ids: np.ndarray
    modality: np.ndarray
    heads: np.ndarray
    tails: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_lattices(cls, lattices) -> "CellBatch":
        L = max(len(lat) for lat in lattices)
        B = len(lattices)
        ids = np.zeros((B, L), dtype=np.int64)
        mod = np.full((B, L), int(Modality.SPECIAL), dtype=np.int64)
        heads = np.zeros((B, L), dtype=np.int64)
        tails = np.zeros((B, L), dtype=np.int64)
        mask = np.zeros((B, L), dtype=bool)
        for b, lat in enumerate(lattices):
            k = len(lat)
            ids[b, :k] = lat.contents
            mod[b, :k] = lat.modalities
            heads[b, :k] = lat.heads
            tails[b, :k] = lat.tails
            mask[b, :k] = True
        return cls(ids, mod, heads, tails, mask)

    def text_only(self, lengths) -> "CellBatch":
        """The [CLS] w_1..w_n [SEP] prefix of every row (objects dropped)."""
        L = int(np.max(lengths)) + 2
        keep = np.arange(L)[None, :] < (np.asarray(lengths)[:, None] + 2)
        return CellBatch(np.where(keep, self.ids[:, :L], 0), np.where(keep, self.modality[:, :L], int(Modality.SPECIAL)),
                         np.where(keep, self.heads[:, :L], 0), np.where(keep, self.tails[:, :L], 0), keep)


@dataclass
class FMIT:
    config: ModelConfig
    word_table: Tensor
    object_table: Tensor
    main: TowerParams
    ebd: TowerParams | None = None
    ebd_word_table: Tensor | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def init(cls, cfg: ModelConfig, seed=0) -> "FMIT":
        seq = np.random.SeedSequence(seed)
        main_seq, ebd_seq = seq.spawn(2)
        rng = np.random.default_rng(main_seq)
        word_table = ag.parameter(rng.normal(size=(cfg.word_vocab_size, cfg.d_w)))
        object_table = ag.parameter(rng.normal(size=(cfg.object_vocab_size, cfg.d_v)))
        main = TowerParams.init(cfg, MULTIMODAL, cfg.num_labels, rng)
        model = cls(cfg, word_table, object_table, main)
        if cfg.ebd:
            erng = np.random.default_rng(ebd_seq)
            if not cfg.share_word_embeddings:
                model.ebd_word_table = ag.parameter(erng.normal(size=(cfg.word_vocab_size, cfg.d_w)))
            if cfg.share_ebd_tower:
                crf = crf_mod.CrfParams.init(cfg.num_boundary_labels, cfg.d, erng, transitions=cfg.transitions)
                model.ebd = TowerParams(TEXT_ONLY, main.W1, main.b1, main.W0, main.b0, main.W_r,
                                        main.layers, crf)
            else:
                model.ebd = TowerParams.init(cfg, TEXT_ONLY, cfg.num_boundary_labels, erng)
        return model

    def parameters(self) -> dict[str, Tensor]:
        """Every distinct learnable tensor, by stable name."""
        out = {"tables.word": self.word_table, "tables.object": self.object_table}
        out.update({f"main.{k}": t for k, t in self.main.named().items()})
        if self.ebd is not None:
            if self.ebd_word_table is not None:
                out["tables.ebd_word"] = self.ebd_word_table
            shared = self.config.share_ebd_tower
            out.update({f"ebd.{k}": t for k, t in self.ebd.named(encoder=not shared).items()})
        for name, t in out.items():
            t.name = name
        return out

    def main_parameter_names(self) -> list[str]:
        return [k for k in self.parameters() if not k.startswith(("ebd.", "tables.ebd"))]

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(arrays) != set(params):
            missing = sorted(set(params) - set(arrays))
            extra = sorted(set(arrays) - set(params))
            raise ValueError(f"parameter mismatch; missing {missing}, unexpected {extra}")
        for name, t in params.items():
            a = arrays[name]
            if a.shape != t.shape:
                raise ValueError(f"{name}: checkpoint shape {a.shape} != model shape {t.shape}")
            t.data = np.array(a, dtype=t.dtype)

    def main_states(self, cells: CellBatch, n_max: int, train=False, rng=None) -> Tensor:
        H = tower_forward(cells, self.main, self.config, self.word_table, self.object_table, train, rng)
        return word_states(H, n_max)

    def ebd_states(self, cells: CellBatch, lengths, train=False, rng=None) -> Tensor:
        if self.ebd is None:
            raise ValueError("model was built without the boundary tower")
        table = self.ebd_word_table if self.ebd_word_table is not None else self.word_table
        text = cells.text_only(lengths)
        H = tower_forward(text, self.ebd, self.config, table, None, train, rng)
        return word_states(H, int(np.max(lengths)))

    def forward_lattice(self, lattice: FlatLattice, tower: str = MULTIMODAL) -> Tensor:
        """H_W (n x d) for one lattice, eval mode."""
        cells = CellBatch.from_lattices([lattice])
        if tower == MULTIMODAL:
            H = self.main_states(cells, lattice.n)
        else:
            H = self.ebd_states(cells, [lattice.n])
        return ag.reshape(H, H.shape[1:])
