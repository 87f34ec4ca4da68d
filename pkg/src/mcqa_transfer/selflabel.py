"""Unsupervised transfer by iterative self-labeling of an unlabeled target set.

Each outer epoch labels every target training example with the model's own
argmax prediction and then runs ``inner_passes`` SGD passes over the
pseudo-labeled set. Test accuracy is traced after every epoch.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .models import build_model
from .rng import stream
from .transfer import FreezeSpec, TrainConfig, evaluate, sgd_epoch


@dataclass(frozen=True)
class SelfLabelConfig:
    epochs: int = 10
    inner_passes: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    freeze: FreezeSpec = field(default_factory=lambda: FreezeSpec("ft-all", tune_embeddings=True))
    # Return the peak-trace params instead of the final ones. The trace is
    # computed on the evaluation set, so this selects on test data.
    select_peak: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.inner_passes < 1:
            raise ConfigError(f"inner_passes must be at least 1, got {self.inner_passes}")

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "inner_passes": self.inner_passes,
            "train": self.train.to_dict(),
            "freeze": {"preset": self.freeze.preset, "frozen_patterns": list(self.freeze.frozen_patterns),
                       "tune_embeddings": self.freeze.tune_embeddings},
            "select_peak": self.select_peak,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {"epochs", "inner_passes", "train", "freeze", "select_peak"}
        if unknown:
            raise ConfigError(f"unknown selflabel fields {sorted(unknown)}")
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        if "freeze" in d:
            fz = dict(d["freeze"])
            bad = set(fz) - {"preset", "frozen_patterns", "tune_embeddings"}
            if bad:
                raise ConfigError(f"unknown freeze fields {sorted(bad)}")
            d["freeze"] = FreezeSpec(**fz)
        return cls(**d)


@dataclass
class SelfLabelTrace:
    """Index 0 is the model before any self-labeling."""
    accuracy: list
    churn: list

    def __post_init__(self):
        if len(self.accuracy) != len(self.churn):
            raise ContractError("accuracy and churn traces differ in length")
        if any(not 0.0 <= c <= 1.0 for c in self.churn):
            raise ContractError("churn values must lie in [0, 1]")

    @property
    def epochs(self):
        return len(self.accuracy) - 1

    @property
    def peak_epoch(self):
        """Earliest epoch with the highest accuracy."""
        return int(np.argmax(self.accuracy))

    @property
    def peak(self):
        return self.accuracy[self.peak_epoch]

    def to_csv(self):
        lines = ["epoch,accuracy,churn"]
        lines += [f"{i},{a!r},{c!r}" for i, (a, c) in enumerate(zip(self.accuracy, self.churn))]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text):
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        return cls([float(r[1]) for r in rows], [float(r[2]) for r in rows])


def _predict(params, ds, model):
    return model.predict(params, [ex.with_answer(None) for ex in ds.examples])


def pseudo_label(params, ds, model=None):
    """Copy of ``ds`` whose answers are the model's own argmax predictions.

    Existing answers are dropped before predicting, so they cannot leak in.
    """
    model = model or build_model("qacnn")
    preds = _predict(params, ds, model)
    return ds.with_examples(ex.with_answer(int(p)) for ex, p in zip(ds.examples, preds))


def self_label_finetune(params, target_train, eval_ds, cfg=SelfLabelConfig(), model=None):
    """Run the self-labeling loop; returns ``(params, trace)``.

    ``churn[e]`` is the share of epoch-``e`` pseudo-labels that the model no
    longer predicts once that epoch's fine-tuning is done (``churn[0] = 0``).
    ``params`` is not modified.
    """
    model = model or build_model(cfg.train.model, cfg.train.hyper)
    if len(target_train) == 0:
        raise ContractError("self-labeling needs at least one target example")
    store = cfg.freeze.apply(params.copy(), model)
    rng = stream(cfg.train.seed, "selflabel/shuffle")
    accuracy, churn = [evaluate(store, eval_ds, model)], [0.0]
    best, best_acc = store.copy(), accuracy[0]
    labeled = pseudo_label(store, target_train, model)
    for _ in range(cfg.epochs):
        for _ in range(cfg.inner_passes):
            sgd_epoch(store, list(labeled.examples), model, cfg.train.lr, cfg.train.batch_size, rng)
        relabeled = pseudo_label(store, target_train, model)
        old = np.array([ex.answer for ex in labeled.examples])
        new = np.array([ex.answer for ex in relabeled.examples])
        churn.append(float(np.mean(old != new)))
        accuracy.append(evaluate(store, eval_ds, model))
        if accuracy[-1] > best_acc:
            best, best_acc = store.copy(), accuracy[-1]
        labeled = relabeled
    trace = SelfLabelTrace(accuracy, churn)
    return (best if cfg.select_peak else store), trace
