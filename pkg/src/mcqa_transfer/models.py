"""Shared plumbing for the two QA models."""
from dataclasses import asdict, fields

import numpy as np

from .corpus import make_batch
from .errors import ConfigError
from .params import ParamStore
from .rng import stream
from .tensor import cross_entropy, no_grad, softmax


class QAModel:
    """Base class: subclasses define ``config_cls``, ``prefix``, ``init_params`` and ``logits``.

    ``logits`` maps a :class:`~mcqa_transfer.corpus.Batch` to a B×K tensor of
    choice scores. Every choice goes through the same scorer, so K may differ
    between datasets.
    """

    kind = None
    config_cls = None
    prefix = None
    # preset -> fnmatch patterns of parameters left trainable during fine-tuning
    presets = {}

    def __init__(self, hyper=None, **overrides):
        if hyper is None:
            hyper = self.config_cls()
        elif isinstance(hyper, dict):
            hyper = self.config_from_dict(hyper)
        if overrides:
            hyper = self.config_from_dict({**asdict(hyper), **overrides})
        self.hyper = hyper

    @classmethod
    def config_from_dict(cls, d):
        known = {f.name for f in fields(cls.config_cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown {cls.kind} hyperparameters {sorted(unknown)}")
        return cls.config_cls(**d)

    def config_dict(self):
        return asdict(self.hyper)

    def _uniform(self, seed, name, shape):
        s = self.hyper.init_scale
        return stream(seed, "init/" + name).uniform(-s, s, size=shape)

    def batch(self, examples):
        h = self.hyper
        return make_batch(examples, h.max_sentences, h.max_len, choice_len=self.choice_len(),
                          max_choice_len=h.max_choice_len)

    def choice_len(self):
        return None

    def logits(self, params, batch):
        raise NotImplementedError

    def probs(self, params, batch):
        return softmax(self.logits(params, batch), axis=-1, mask=batch.choice_mask)

    def loss(self, params, batch):
        return cross_entropy(self.logits(params, batch), batch.answers, mask=batch.choice_mask)

    def predict_proba(self, params, examples, batch_size=64):
        out = []
        with no_grad():
            for i in range(0, len(examples), batch_size):
                b = self.batch(examples[i:i + batch_size])
                p = self.probs(params, b).data
                out.extend(p[j, :b.choice_mask[j].sum()] for j in range(len(b)))
        return out

    def predict(self, params, examples, batch_size=64):
        """Argmax choice per example; ties go to the lowest index."""
        preds = np.empty(len(examples), dtype=np.int64)
        with no_grad():
            for i in range(0, len(examples), batch_size):
                b = self.batch(examples[i:i + batch_size])
                logits = self.logits(params, b).data
                logits = np.where(b.choice_mask, logits, -np.inf)
                preds[i:i + len(b)] = np.argmax(logits, axis=-1)
        return preds

    def trainable_patterns(self, preset):
        if preset not in self.presets:
            raise ConfigError(f"{self.kind} has no freeze preset {preset!r}")
        return self.presets[preset]

    def new_store(self):
        return ParamStore()


def build_model(kind, hyper=None):
    from .memn2n import MemN2N
    from .qacnn import QACNN

    registry = {"memn2n": MemN2N, "qacnn": QACNN}
    if kind not in registry:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {sorted(registry)}")
    return registry[kind](hyper)
