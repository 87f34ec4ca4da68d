"""Query-based attention CNN for multiple-choice QA.

Pipeline for one example, with ``E`` the word-embedding table:

1. cosine similarity maps ``SQ`` (story word × question word, per sentence)
   and ``SC`` (story word × choice word, per choice and sentence);
2. word attention per sentence: ``softmax(scale * max_q SQ)`` over words;
   sentence attention: ``softmax(scale * max SQ[sentence])`` over sentences;
3. stage 1: same-padded conv over each sentence's ``SC`` rows (one channel
   per choice word), ReLU, pooled by word attention -> one vector per
   sentence;
4. stage 2: conv over the sentence sequence, ReLU, pooled by sentence
   attention -> one feature vector per choice;
5. the same two-layer scorer maps each choice feature to a scalar, and a
   softmax across choices gives the answer distribution.
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .corpus import PAD
from .models import QAModel
from .tensor import (
    Tensor,
    add,
    conv1d,
    einsum,
    embed_lookup,
    l2_normalize,
    matmul,
    mul,
    no_grad,
    relu,
    reshape,
    softmax,
    tmax,
)


@dataclass(frozen=True)
class QacnnConfig:
    d: int = 32
    width1: int = 3
    filters1: int = 32
    width2: int = 3
    filters2: int = 32
    hidden: int = 64
    attn_scale: float = 5.0
    init_scale: float = 0.1
    max_sentences: int = 60
    max_len: int = 40
    max_choice_len: int = 20


@dataclass
class SimilarityMaps:
    SQ: np.ndarray  # N x L x Lq
    SC: np.ndarray  # K x N x L x Lc


@dataclass
class AttentionRecord:
    word_level: List[np.ndarray]
    sentence_level: np.ndarray


@dataclass
class AttentionExport:
    """Word attention aligned to the original tokens of each story sentence."""
    choice: int
    sentences: List[List[str]]
    word_level: List[np.ndarray]
    sentence_level: np.ndarray
    question: Optional[List[str]] = None
    choice_text: Optional[List[str]] = None

    def rows(self):
        """``(sentence index, token, weight)`` triples in reading order."""
        return [(i, tok, float(w)) for i, (sent, ws) in enumerate(zip(self.sentences, self.word_level))
                for tok, w in zip(sent, ws)]

    def to_dict(self):
        return {
            "choice": self.choice,
            "question": self.question,
            "choice_text": self.choice_text,
            "sentence_level": [float(x) for x in self.sentence_level],
            "rows": [{"sentence": i, "token": t, "weight": w} for i, t, w in self.rows()],
        }


@dataclass
class QacnnOutput:
    choice_probs: np.ndarray
    attention: AttentionRecord
    features: np.ndarray  # K x filters2


def _unit_embed(params, ids):
    return l2_normalize(embed_lookup(params["qacnn.embed"], ids), axis=-1)


def batch_similarity(params, batch):
    """Cosine maps for a batch: SQ is B×N×L×Lq, SC is B×K×N×L×Lc."""
    s = _unit_embed(params, batch.story)
    q = _unit_embed(params, batch.question)
    c = _unit_embed(params, batch.choices)
    return einsum("bnld,bqd->bnlq", s, q), einsum("bnld,bkcd->bknlc", s, c)


def batch_attention(SQ, batch, scale):
    """Word-level (B×N×L) and sentence-level (B×N) attention from SQ."""
    qmask = batch.question_mask[:, None, None, :]
    wmask = batch.word_mask
    word_logits = tmax(SQ, axis=-1, mask=qmask)
    word_attn = softmax(mul(word_logits, scale), axis=-1, mask=wmask)
    sent_logits = tmax(word_logits, axis=-1, mask=wmask)
    sent_attn = softmax(mul(sent_logits, scale), axis=-1, mask=batch.sentence_mask)
    return word_attn, sent_attn


def batch_stage1(params, SC, word_attn):
    H = conv1d(SC, params["qacnn.cnn1.weight"], params["qacnn.cnn1.bias"])
    return einsum("bnl,bknlf->bknf", word_attn, H)


def batch_stage2(params, sent_feats, sent_attn):
    G = conv1d(sent_feats, params["qacnn.cnn2.weight"], params["qacnn.cnn2.bias"])
    return einsum("bn,bknf->bkf", sent_attn, G)


def batch_score(params, feats):
    h = relu(add(matmul(feats, params["qacnn.fc1.weight"]), params["qacnn.fc1.bias"]))
    s = matmul(h, params["qacnn.fc2.weight"])
    return add(reshape(s, s.shape[:-1]), params["qacnn.fc2.bias"])


class QACNN(QAModel):
    kind = "qacnn"
    config_cls = QacnnConfig
    prefix = "qacnn"
    presets = {
        "ft-last": ("qacnn.fc2.*",),
        "ft-last2": ("qacnn.fc1.*", "qacnn.fc2.*"),
        "ft-all": ("qacnn.*",),
    }

    def choice_len(self):
        return self.hyper.max_choice_len

    def init_params(self, vocab_size, seed=0, embeddings=None):
        """Uniform(-s, s) weights, zero biases, zero PAD row.

        A supplied :class:`EmbeddingMatrix` becomes ``qacnn.embed`` and is
        frozen when the matrix says so.
        """
        h = self.hyper
        store = self.new_store()
        if embeddings is not None:
            E = embeddings.matrix.copy()
            E[PAD] = 0.0
            store.add("qacnn.embed", E, frozen=embeddings.frozen, pretrained=True)
        else:
            E = self._uniform(seed, "qacnn.embed", (vocab_size, h.d))
            E[PAD] = 0.0
            store.add("qacnn.embed", E)
        shapes = {
            "qacnn.cnn1.weight": (h.width1, h.max_choice_len, h.filters1),
            "qacnn.cnn2.weight": (h.width2, h.filters1, h.filters2),
            "qacnn.fc1.weight": (h.filters2, h.hidden),
            "qacnn.fc2.weight": (h.hidden, 1),
        }
        for name, shape in shapes.items():
            store.add(name, self._uniform(seed, name, shape))
        store.add("qacnn.cnn1.bias", np.zeros(h.filters1))
        store.add("qacnn.cnn2.bias", np.zeros(h.filters2))
        store.add("qacnn.fc1.bias", np.zeros(h.hidden))
        store.add("qacnn.fc2.bias", np.zeros(()))
        return store

    def _run(self, params, batch):
        SQ, SC = batch_similarity(params, batch)
        word_attn, sent_attn = batch_attention(SQ, batch, self.hyper.attn_scale)
        sent_feats = batch_stage1(params, SC, word_attn)
        feats = batch_stage2(params, sent_feats, sent_attn)
        return batch_score(params, feats), (SQ, SC, word_attn, sent_attn, feats)

    def logits(self, params, batch):
        return self._run(params, batch)[0]

    def forward(self, params, ex):
        with no_grad():
            batch = self.batch([ex])
            logits, (_, _, word_attn, sent_attn, feats) = self._run(params, batch)
            probs = softmax(logits, axis=-1, mask=batch.choice_mask).data[0]
        n = int(batch.sentence_mask[0].sum())
        lengths = batch.word_mask[0].sum(axis=-1)
        words = [word_attn.data[0, i, :lengths[i]] for i in range(n)]
        return QacnnOutput(probs, AttentionRecord(words, sent_attn.data[0, :n]), feats.data[0])

    def similarity_maps(self, params, ex):
        with no_grad():
            batch = self.batch([ex])
            SQ, SC = batch_similarity(params, batch)
        return SimilarityMaps(SQ.data[0], SC.data[0])

    def export_attention(self, params, ex, choice, vocab=None):
        """Word- and sentence-level attention aligned to the example's own tokens.

        Tokens cut by the sentence-length bound get weight 0; sentences past
        the sentence bound are left out.
        """
        if not 0 <= choice < len(ex.choices):
            raise IndexError(f"choice {choice} out of range for {len(ex.choices)} choices")
        enc = ex
        if vocab is not None:
            from .corpus import encode_example
            enc = encode_example(ex, vocab)
        out = self.forward(params, enc)
        sentences, weights = [], []
        for i, w in enumerate(out.attention.word_level):
            toks = list(ex.story[i])
            full = np.zeros(len(toks))
            full[:len(w)] = w
            sentences.append([str(t) for t in toks])
            weights.append(full)
        return AttentionExport(
            choice=choice,
            sentences=sentences,
            word_level=weights,
            sentence_level=out.attention.sentence_level,
            question=[str(t) for t in ex.question],
            choice_text=[str(t) for t in ex.choices[choice]],
        )


# -- single-example building blocks ---------------------------------------------

def similarity_maps(params, ex, model=None):
    return (model or QACNN()).similarity_maps(params, ex)


def word_attention(sq, scale=QacnnConfig.attn_scale):
    """Attention over the story words of one sentence given its L×Lq map."""
    sq = np.asarray(sq, dtype=np.float64)
    return softmax(Tensor(sq.max(axis=-1) * scale), axis=-1).data


def sentence_attention(sq_per_sentence, scale=QacnnConfig.attn_scale):
    """Attention over sentences; each entry of the list is that sentence's SQ block."""
    logits = np.array([np.max(block) for block in sq_per_sentence]) * scale
    return softmax(Tensor(logits), axis=-1).data


def stage1(params, sc, word_attn):
    """Per-sentence features for one choice.

    ``sc`` is N×L×Lc (Lc equal to the configured choice length) and
    ``word_attn`` N×L; returns N×filters1.
    """
    with no_grad():
        H = conv1d(Tensor(sc), params["qacnn.cnn1.weight"], params["qacnn.cnn1.bias"])
        return einsum("nl,nlf->nf", Tensor(word_attn), H).data


def stage2(params, sent_feats, sent_attn):
    """Choice feature (filters2) from N×filters1 sentence features."""
    with no_grad():
        G = conv1d(Tensor(sent_feats), params["qacnn.cnn2.weight"], params["qacnn.cnn2.bias"])
        return einsum("n,nf->f", Tensor(sent_attn), G).data


def qacnn_forward(params, ex, model=None):
    return (model or QACNN()).forward(params, ex)


def export_attention(params, ex, choice, model=None, vocab=None):
    return (model or QACNN()).export_attention(params, ex, choice, vocab=vocab)
