"""End-to-end memory network adapted to multiple-choice answers.

Story sentences are embedded twice (``A`` for addressing, ``C`` for
reading), the question once (``B``), and every answer choice by a fourth
table ``F``. Each representation is the mean of its word vectors. A hop
attends over sentences with ``softmax(<m_i, q>)`` and adds the weighted
read-out to ``q``; choices are then scored by ``<q, f_j>``.
"""
from dataclasses import dataclass
from typing import List

import numpy as np

from .corpus import PAD, EmbeddingMatrix
from .errors import ContractError
from .models import QAModel
from .tensor import Tensor, einsum, embed_lookup, mul, no_grad, softmax, tsum

LAYERS = ("A", "B", "C", "F")


@dataclass(frozen=True)
class MemN2NConfig:
    d: int = 32
    hops: int = 1
    init_scale: float = 0.1
    max_sentences: int = 60
    max_len: int = 40
    max_choice_len: int = 40
    pretrained_layers: tuple = ("B", "F")

    def __post_init__(self):
        object.__setattr__(self, "pretrained_layers", tuple(self.pretrained_layers))
        if self.hops < 1 or self.d < 1:
            raise ContractError("hops and d must be positive")


@dataclass
class MemN2NOutput:
    choice_probs: np.ndarray
    attention: List[np.ndarray]  # one vector over story sentences per hop


def _table(E):
    if isinstance(E, Tensor):
        return E
    if isinstance(E, EmbeddingMatrix):
        return Tensor(E.matrix)
    return Tensor(np.asarray(E, dtype=np.float64))


def mean_encode(table, ids):
    """Mean of the embedding rows of ``ids`` over the last axis, PAD ignored.

    All-PAD rows encode to the zero vector.
    """
    ids = np.asarray(ids)
    mask = (ids != PAD).astype(np.float64)
    count = np.maximum(mask.sum(axis=-1, keepdims=True), 1.0)
    emb = embed_lookup(table, ids)
    return tsum(mul(emb, (mask / count)[..., None]), axis=-2)


def encode_sentence(ids, E):
    """Average word embedding of one sentence (PAD tokens excluded)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise ContractError("cannot encode an empty sentence")
    if not (ids != PAD).any():
        raise ContractError("cannot encode a sentence made only of PAD")
    return mean_encode(_table(E), ids)


class MemN2N(QAModel):
    kind = "memn2n"
    config_cls = MemN2NConfig
    prefix = "memn2n"
    presets = {
        "ft-last": ("memn2n.F",),
        "ft-last2": ("memn2n.C", "memn2n.F"),
        "ft-all": ("memn2n.*",),
    }

    def init_params(self, vocab_size, seed=0, embeddings=None):
        """Uniform(-s, s) tables with a zero PAD row.

        ``embeddings`` (an :class:`EmbeddingMatrix`) initialises the layers in
        ``pretrained_layers``; those start frozen.
        """
        store = self.new_store()
        d = self.hyper.d if embeddings is None else embeddings.d
        for layer in LAYERS:
            name = f"memn2n.{layer}"
            pre = embeddings is not None and layer in self.hyper.pretrained_layers
            if pre:
                value = embeddings.matrix.copy()
            else:
                value = self._uniform(seed, name, (vocab_size, d))
            value[PAD] = 0.0
            store.add(name, value, frozen=pre and embeddings.frozen, pretrained=pre)
        return store

    def _hops(self, params, batch):
        A, B, C, F = (params[f"memn2n.{x}"] for x in LAYERS)
        m = mean_encode(A, batch.story)          # B x N x d
        c = mean_encode(C, batch.story)          # B x N x d
        q = mean_encode(B, batch.question)       # B x d
        smask = batch.sentence_mask
        attention = []
        for _ in range(self.hyper.hops):
            attn = softmax(einsum("bnd,bd->bn", m, q), axis=-1, mask=smask)
            attention.append(attn)
            q = q + einsum("bn,bnd->bd", attn, c)
        f = mean_encode(F, batch.choices)        # B x K x d
        return einsum("bkd,bd->bk", f, q), attention

    def logits(self, params, batch):
        return self._hops(params, batch)[0]

    def forward(self, params, ex):
        """Choice probabilities and per-hop sentence attention for one example."""
        with no_grad():
            batch = self.batch([ex])
            logits, attention = self._hops(params, batch)
            probs = softmax(logits, axis=-1, mask=batch.choice_mask).data[0]
        n = int(batch.sentence_mask[0].sum())
        return MemN2NOutput(probs, [a.data[0, :n] for a in attention])


def memn2n_forward(params, ex, model=None):
    return (model or MemN2N()).forward(params, ex)


def memn2n_predict(params, ex, model=None):
    """Index of the most probable choice; exact ties resolve to the lowest index."""
    probs = memn2n_forward(params, ex, model).choice_probs
    return int(np.argmax(probs))
