"""Supervised training, evaluation and the pre-train / fine-tune procedure."""
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .corpus import Splits, concat, subsample
from .errors import ConfigError, ContractError, NumericError
from .models import build_model
from .params import sgd_step
from .rng import stream
from .tensor import backward

PRESETS = ("target-only", "source-only", "source+target", "ft-last", "ft-last2", "ft-all")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    model: str = "qacnn"
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr >= 0:
            raise ConfigError(f"lr must be non-negative, got {self.lr}")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1 or self.seed < 0:
            raise ConfigError("batch_size and patience must be positive; max_epochs and seed non-negative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train fields {sorted(unknown)}")
        return cls(**d)


def fingerprint(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class FreezeSpec:
    """Which parameters may change during fine-tuning.

    ``preset`` picks the trainable set (see :data:`PRESETS`);
    ``frozen_patterns`` adds fnmatch patterns to keep fixed regardless.
    Parameters initialised from pretrained vectors stay frozen unless
    ``tune_embeddings`` is set.
    """
    preset: str = "ft-last2"
    frozen_patterns: tuple = ()
    tune_embeddings: bool = False

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown freeze preset {self.preset!r}; expected one of {PRESETS}")
        object.__setattr__(self, "frozen_patterns", tuple(self.frozen_patterns))

    def trainable(self, store, model):
        if self.preset == "source-only":
            return []
        key = self.preset if self.preset in ("ft-last", "ft-last2") else "ft-all"
        names = {n for pat in model.trainable_patterns(key) for n in store.match(pat)}
        names -= {n for pat in self.frozen_patterns for n in store.match(pat)}
        if not self.tune_embeddings:
            names -= store.pretrained
        return sorted(names)

    def apply(self, store, model):
        keep = set(self.trainable(store, model))
        if not keep and self.preset != "source-only":
            raise ConfigError(f"freeze spec {self} leaves nothing to train")
        store.freeze_only(n for n in store.names() if n not in keep)
        return store


@dataclass
class EpochStat:
    epoch: int
    train_loss: Optional[float]
    dev_accuracy: float


@dataclass
class RunRecord:
    fingerprint: str
    seed: int
    config: dict
    stage: str
    epochs: list
    selected_epoch: int
    dev_accuracy: float
    test_accuracy: Optional[float] = None
    qtype_accuracy: Optional[dict] = None
    preset: Optional[str] = None
    pretrain: Optional["RunRecord"] = None
    wall_clock: float = 0.0

    def to_dict(self, include_timing=False):
        d = {
            "fingerprint": self.fingerprint,
            "seed": self.seed,
            "config": self.config,
            "stage": self.stage,
            "preset": self.preset,
            "epochs": [asdict(e) for e in self.epochs],
            "selected_epoch": self.selected_epoch,
            "dev_accuracy": self.dev_accuracy,
            "test_accuracy": self.test_accuracy,
            "qtype_accuracy": self.qtype_accuracy,
            "pretrain": None if self.pretrain is None else self.pretrain.to_dict(include_timing),
        }
        if include_timing:
            d["wall_clock"] = self.wall_clock
        return d

    def to_json(self, include_timing=False):
        return json.dumps(self.to_dict(include_timing), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["epochs"] = [EpochStat(**e) for e in d["epochs"]]
        if d.get("pretrain") is not None:
            d["pretrain"] = cls.from_dict(d["pretrain"])
        if d.get("qtype_accuracy") is not None:
            d["qtype_accuracy"] = {int(k): v for k, v in d["qtype_accuracy"].items()}
        return cls(**d)


def select_epoch(epochs):
    """Epoch with the best dev accuracy; the earliest one wins ties."""
    best = max(e.dev_accuracy for e in epochs)
    return next(e.epoch for e in epochs if e.dev_accuracy == best)


def _require_labels(ds, what):
    for i, ex in enumerate(ds.examples):
        if ex.answer is None:
            raise ContractError(f"{what} example {i} of {ds.name!r} has no answer")


def evaluate(params, ds, model, workers=1):
    """Fraction of examples whose argmax choice equals the gold answer."""
    _require_labels(ds, "evaluation")
    if len(ds) == 0:
        raise ContractError(f"cannot evaluate on empty dataset {ds.name!r}")
    gold = np.array([ex.answer for ex in ds.examples])
    examples = list(ds.examples)
    if workers <= 1:
        correct = int((model.predict(params, examples) == gold).sum())
    else:
        size = math.ceil(len(examples) / workers)
        chunks = [(i, examples[i:i + size]) for i in range(0, len(examples), size)]
        with ThreadPoolExecutor(workers) as pool:
            counts = pool.map(lambda c: int((model.predict(params, c[1]) == gold[c[0]:c[0] + len(c[1])]).sum()),
                              chunks)
            correct = sum(counts)
    return correct / len(examples)


def eval_by_qtype(params, ds, model):
    """Accuracy and count for question types 1, 2, 3."""
    _require_labels(ds, "evaluation")
    for i, ex in enumerate(ds.examples):
        if ex.qtype is None:
            raise ContractError(f"example {i} of {ds.name!r} has no question type")
    preds = model.predict(params, list(ds.examples))
    out = {}
    for t in (1, 2, 3):
        idx = [i for i, ex in enumerate(ds.examples) if ex.qtype == t]
        hits = sum(int(preds[i] == ds.examples[i].answer) for i in idx)
        out[t] = {"accuracy": hits / len(idx) if idx else None, "count": len(idx)}
    return out


def sgd_epoch(store, examples, model, lr, batch_size, rng):
    """One shuffled pass of mini-batch SGD; returns the mean batch loss."""
    order = rng.permutation(len(examples))
    losses = []
    for i in range(0, len(order), batch_size):
        batch = model.batch([examples[j] for j in order[i:i + batch_size]])
        loss = model.loss(store, batch)
        value = float(loss.data)
        if not math.isfinite(value):
            raise NumericError(f"non-finite training loss {value}")
        backward(loss)
        sgd_step(store, lr)
        for name in store.trainable():
            if not np.isfinite(store[name].data).all():
                raise NumericError(f"parameter {name!r} became non-finite")
        losses.append(value)
    return float(np.mean(losses)) if losses else 0.0


def train(params, train_ds, dev_ds, cfg, model=None, stage="train"):
    """Mini-batch SGD with per-epoch dev selection.

    Epoch 0 is the starting point, so the returned parameters are never
    worse on dev than the input. Training stops after ``cfg.patience``
    epochs without a dev improvement. ``params`` is not modified.
    """
    model = model or build_model(cfg.model, cfg.hyper)
    _require_labels(train_ds, "training")
    _require_labels(dev_ds, "dev")
    start = time.perf_counter()
    store = params.copy()
    examples = list(train_ds.examples)
    rng = stream(cfg.seed, f"{stage}/shuffle")
    acc = evaluate(store, dev_ds, model)
    epochs = [EpochStat(0, None, acc)]
    best, best_acc, stale = store.copy(), acc, 0
    for epoch in range(1, cfg.max_epochs + 1):
        if not examples:
            break
        loss = sgd_epoch(store, examples, model, cfg.lr, cfg.batch_size, rng)
        acc = evaluate(store, dev_ds, model)
        epochs.append(EpochStat(epoch, loss, acc))
        if acc > best_acc:
            best, best_acc, stale = store.copy(), acc, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    config = {"train": cfg.to_dict(), "model_hyper": model.config_dict(), "train_set": train_ds.name,
              "train_size": len(train_ds), "dev_set": dev_ds.name}
    record = RunRecord(
        fingerprint=fingerprint(config),
        seed=cfg.seed,
        config=config,
        stage=stage,
        epochs=epochs,
        selected_epoch=select_epoch(epochs),
        dev_accuracy=best_acc,
        wall_clock=time.perf_counter() - start,
    )
    return best, record


class TransferData(NamedTuple):
    """Encoded source/target splits plus what is needed to build parameters."""
    source: Splits
    target: Splits
    vocab_size: int
    embeddings: Optional[object] = None


@dataclass
class TransferResult:
    record: RunRecord
    params: object
    pretrained: object = None


def pretrain(data, cfg, model=None):
    """Step 1: train on the source task, everything but pretrained vectors trainable."""
    model = model or build_model(cfg.model, cfg.hyper)
    params = model.init_params(data.vocab_size, cfg.seed, data.embeddings)
    FreezeSpec("ft-all").apply(params, model)
    return train(params, data.source.train, data.source.dev, cfg, model, stage="pretrain")


def _zero_shot(params, dev, cfg, model, stage):
    acc = evaluate(params, dev, model)
    config = {"train": cfg.to_dict(), "model_hyper": model.config_dict(), "dev_set": dev.name}
    return RunRecord(fingerprint(config), cfg.seed, config, stage, [EpochStat(0, None, acc)], 0, acc)


def transfer_run(data, cfg, freeze, model=None, finetune_cfg=None, pretrained=None):
    """Run one Table-2 style configuration and report target test accuracy.

    ``pretrained`` may carry an earlier ``(params, record)`` from
    :func:`pretrain` on the same source data and config; step 1 is then
    skipped. An empty source train set falls back to target-only training
    and an empty target train set to zero-shot evaluation.
    """
    model = model or build_model(cfg.model, cfg.hyper)
    ft_cfg = finetune_cfg or cfg
    source, target = data.source, data.target
    preset = freeze.preset
    pre_params = pre_rec = None
    if preset == "target-only" or (len(source.train) == 0 and preset != "source-only"):
        params = FreezeSpec("target-only", freeze.frozen_patterns, freeze.tune_embeddings).apply(
            model.init_params(data.vocab_size, cfg.seed, data.embeddings), model)
        best, record = train(params, target.train, target.dev, ft_cfg, model, stage="target-only")
    elif preset == "source+target":
        params = FreezeSpec("source+target", freeze.frozen_patterns, freeze.tune_embeddings).apply(
            model.init_params(data.vocab_size, cfg.seed, data.embeddings), model)
        mixed = concat([source.train, target.train])
        best, record = train(params, mixed, target.dev, cfg, model, stage="source+target")
    else:
        pre_params, pre_rec = pretrained if pretrained is not None else pretrain(data, cfg, model)
        if preset == "source-only" or len(target.train) == 0:
            best = pre_params
            record = _zero_shot(best, target.dev, ft_cfg, model, stage="zero-shot")
        else:
            params = freeze.apply(pre_params.copy(), model)
            best, record = train(params, target.train, target.dev, ft_cfg, model, stage="finetune")
    record.preset = preset
    record.pretrain = pre_rec
    record.config = {**record.config, "freeze": {"preset": preset, "frozen_patterns": list(freeze.frozen_patterns),
                                                  "tune_embeddings": freeze.tune_embeddings}}
    record.fingerprint = fingerprint(record.config)
    record.test_accuracy = evaluate(best, target.test, model)
    if target.test.labeled and all(ex.qtype is not None for ex in target.test.examples):
        record.qtype_accuracy = eval_by_qtype(best, target.test, model)
    return TransferResult(record, best, pre_params)


# -- fraction ablations ----------------------------------------------------------

@dataclass
class AblationRow:
    fraction: float
    accuracies: list
    mean: float
    stdev: float
    delta: Optional[float]


@dataclass
class AblationTable:
    axis: str
    rows: list
    records: list = field(default_factory=list)

    def means(self):
        return [r.mean for r in self.rows]

    def to_csv(self):
        """One row per fraction; ``cell`` mimics the ``56.0 (0.7)`` table layout."""
        lines = ["percentage,accuracy,stdev,delta,runs,cell"]
        for r in self.rows:
            acc = 100 * r.mean
            delta = "" if r.delta is None else f"{100 * r.delta:.1f}"
            cell = f"{acc:.1f}" if r.delta is None else f"{acc:.1f} ({100 * r.delta:.1f})"
            lines.append(f"{100 * r.fraction:g},{acc:.1f},{100 * r.stdev:.1f},{delta},{len(r.accuracies)},{cell}")
        return "\n".join(lines) + "\n"


def _threads():
    try:
        return max(1, int(os.environ.get("MCQA_TRANSFER_THREADS", "1")))
    except ValueError:
        return 1


def ablate_fraction(axis, fractions, cfg, seeds, data: Union[TransferData, Callable[[int], TransferData]],
                    freeze=FreezeSpec("ft-last2"), model=None, finetune_cfg=None, pretrain_cache=None):
    """Vary the share of target (fine-tuning) or source (pre-training) data.

    ``data`` is fixed or a function of the seed. ``pretrain_cache`` (a dict)
    lets several sweeps share pre-training runs keyed by
    ``(seed, source fraction)``.
    """
    if axis not in ("target", "source"):
        raise ConfigError(f"axis must be 'target' or 'source', got {axis!r}")
    fractions = [float(f) for f in fractions]
    if fractions != sorted(fractions) or fractions[0] != 0.0 or fractions[-1] != 1.0:
        raise ConfigError("fractions must be ascending and include 0 and 1")
    model = model or build_model(cfg.model, cfg.hyper)
    cache = pretrain_cache if pretrain_cache is not None else {}

    def one_seed(seed):
        d = data(seed) if callable(data) else data
        scfg = replace(cfg, seed=seed)
        sft = None if finetune_cfg is None else replace(finetune_cfg, seed=seed)
        out = []
        for f in fractions:
            if axis == "target":
                src_frac = 1.0
                run_data = d._replace(target=d.target._replace(train=subsample(d.target.train, f, seed)))
            else:
                src_frac = f
                run_data = d._replace(source=d.source._replace(train=subsample(d.source.train, f, seed)))
            pre = None
            if len(run_data.source.train) > 0:
                key = (seed, src_frac)
                if key not in cache:
                    cache[key] = pretrain(run_data, scfg, model)
                pre = cache[key]
            res = transfer_run(run_data, scfg, freeze, model, finetune_cfg=sft, pretrained=pre)
            out.append(res.record)
        return out

    workers = min(_threads(), len(seeds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            per_seed = list(pool.map(one_seed, seeds))
    else:
        per_seed = [one_seed(s) for s in seeds]

    rows, prev = [], None
    for i, f in enumerate(fractions):
        accs = [runs[i].test_accuracy for runs in per_seed]
        m = float(np.mean(accs))
        sd = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        rows.append(AblationRow(f, accs, m, sd, None if prev is None else m - prev))
        prev = m
    records = [r for runs in per_seed for r in runs]
    return AblationTable(axis, rows, records)
