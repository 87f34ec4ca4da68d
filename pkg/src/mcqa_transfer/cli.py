"""Command-line entry point.

Every command reads one JSON config (``--config``), applies flag overrides,
validates everything before computing, and writes its outputs plus a
``manifest.json`` into the output directory.

Precedence: flags > config file > defaults.

Exit codes: 0 success, 2 bad config, 3 bad or missing data, 4 numeric failure.
"""
import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    KNOWN_SPLITS,
    Splits,
    build_vocab,
    check_split_counts,
    embeddings_from_vectors,
    encode_dataset,
    load_dataset,
    load_embeddings,
)
from .errors import ConfigError, ContractError, DataError, McqaError, NumericError
from .models import build_model
from .report import accuracy_curve_svg, attention_heatmap_svg, records_jsonl, write_bundle
from .selflabel import SelfLabelConfig, self_label_finetune
from .synth import SynthConfig, gen_synthetic, write_synthetic
from .transfer import (
    FreezeSpec,
    TrainConfig,
    TransferData,
    ablate_fraction,
    eval_by_qtype,
    evaluate,
    pretrain,
    transfer_run,
)

COMMANDS = ("pretrain", "finetune", "selflabel", "eval", "ablate", "gen-synth", "export-attn")
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SPLITS = ("train", "dev", "test")


@dataclass
class ExperimentConfig:
    """Everything a command needs; unknown keys are rejected.

    ``data`` is either ``{"synth": {...SynthConfig fields}}`` or
    ``{"source": {"train": path, "dev": path, "test": path}, "target": {...},
    "vectors": path, "embed_dim": int}`` (vectors optional). A side may add
    ``"dataset": "toefl"`` (or another known name) to check its split sizes.
    """
    command: str = "pretrain"
    model: str = "qacnn"
    hyper: dict = field(default_factory=dict)
    data: dict = field(default_factory=lambda: {"synth": {}})
    train: dict = field(default_factory=dict)
    finetune: Optional[dict] = None
    freeze: dict = field(default_factory=lambda: {"preset": "ft-last2"})
    selflabel: dict = field(default_factory=dict)
    axis: str = "target"
    fractions: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    seeds: list = field(default_factory=lambda: [0])
    out: str = "out"
    example: int = 0
    choice: Optional[int] = None
    reference: Optional[float] = None

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        build_model(self.model, self.hyper)
        self.train_config()
        self.finetune_config()
        self.freeze_spec()
        self.selflabel_config()
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError(f"seeds must be a non-empty list of non-negative integers, got {self.seeds}")
        if self.axis not in ("target", "source", "both"):
            raise ConfigError(f"axis must be target, source or both, got {self.axis!r}")
        fr = [float(f) for f in self.fractions]
        if fr != sorted(fr) or not fr or fr[0] != 0.0 or fr[-1] != 1.0:
            raise ConfigError("fractions must be ascending and include 0 and 1")
        if not isinstance(self.data, dict) or not self.data:
            raise ConfigError("data must be an object")
        if "synth" in self.data:
            if set(self.data) != {"synth"}:
                raise ConfigError("synthetic data takes no other data fields")
            SynthConfig.from_dict(self.data["synth"])
        else:
            unknown = set(self.data) - {"source", "target", "vectors", "embed_dim"}
            if unknown:
                raise ConfigError(f"unknown data fields {sorted(unknown)}")
            for side in ("source", "target"):
                paths = self.data.get(side, {})
                if not isinstance(paths, dict) or set(paths) - {*SPLITS, "dataset"}:
                    raise ConfigError(f"data.{side} must map some of {SPLITS} to paths")
                if "dataset" in paths and str(paths["dataset"]).lower() not in KNOWN_SPLITS:
                    raise ConfigError(f"data.{side}.dataset must be one of {sorted(KNOWN_SPLITS)}")
            if "vectors" in self.data and not isinstance(self.data.get("embed_dim"), int):
                raise ConfigError("data.vectors needs an integer data.embed_dim")

    @property
    def seed(self):
        return self.seeds[0]

    def train_config(self):
        return TrainConfig.from_dict({"model": self.model, "hyper": self.hyper, "seed": self.seed,
                                      **self.train})

    def finetune_config(self):
        if self.finetune is None:
            return self.train_config()
        return TrainConfig.from_dict({"model": self.model, "hyper": self.hyper, "seed": self.seed,
                                      **self.finetune})

    def freeze_spec(self):
        fz = dict(self.freeze)
        unknown = set(fz) - {"preset", "frozen_patterns", "tune_embeddings"}
        if unknown:
            raise ConfigError(f"unknown freeze fields {sorted(unknown)}")
        return FreezeSpec(**fz)

    def selflabel_config(self):
        d = dict(self.selflabel)
        d["train"] = {"model": self.model, "hyper": self.hyper, "seed": self.seed, **d.get("train", {})}
        return SelfLabelConfig.from_dict(d)


# -- data ---------------------------------------------------------------------------

@dataclass
class LoadedData:
    source: Splits
    target: Splits
    vocab: object
    transfer: TransferData


def _load_side(paths, side):
    out = []
    for split in SPLITS:
        p = paths.get(split)
        if p is None:
            raise ConfigError(f"data.{side}.{split} is missing")
        out.append(load_dataset(p, name=f"{side}", split=split))
    splits = Splits(*out)
    # A named public dataset must match its published split sizes.
    if "dataset" in paths:
        check_split_counts(splits, paths["dataset"])
    return splits


def load_data(cfg, vocab=None, seed=None):
    """Raw and encoded splits. A given ``vocab`` (from a checkpoint) is reused as is."""
    seed = cfg.seed if seed is None else seed
    if "synth" in cfg.data:
        corpus = gen_synthetic(SynthConfig.from_dict(cfg.data["synth"]))
        source, target = corpus.source, corpus.target
        vectors, d = corpus.vectors, corpus.config.embed_dim
    else:
        source = _load_side(cfg.data.get("source", {}), "source")
        target = _load_side(cfg.data.get("target", {}), "target")
        vectors, d = None, cfg.data.get("embed_dim")
    if vocab is None:
        vocab = build_vocab([*source, *target])
    if vectors is not None:
        emb = embeddings_from_vectors(vectors, vocab, d, seed)
    elif "vectors" in cfg.data:
        emb = load_embeddings(cfg.data["vectors"], vocab, d, seed)
    else:
        emb = None

    def enc(splits):
        return Splits(*[encode_dataset(ds, vocab) for ds in splits])

    return LoadedData(source, target, vocab, TransferData(enc(source), enc(target), len(vocab), emb))


def _checkpoint(args, cfg):
    if not args.checkpoint:
        raise ConfigError(f"{cfg.command} needs --checkpoint")
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.model.kind != cfg.model:
        raise ConfigError(f"checkpoint holds a {ckpt.model.kind} model, config asks for {cfg.model}")
    return ckpt


# -- commands -----------------------------------------------------------------------

def cmd_pretrain(cfg, args):
    data = load_data(cfg)
    tcfg = cfg.train_config()
    model = build_model(cfg.model, cfg.hyper)
    params, record = pretrain(data.transfer, tcfg, model)
    out = Path(cfg.out)
    save_checkpoint(out / "checkpoint.zip", params, model, data.vocab, cfg.to_dict(), cfg.seed)
    return {"records.jsonl": records_jsonl([record])}


def cmd_finetune(cfg, args):
    ckpt = _checkpoint(args, cfg)
    data = load_data(cfg, ckpt.vocab)
    res = transfer_run(data.transfer, cfg.train_config(), cfg.freeze_spec(), ckpt.model,
                       finetune_cfg=cfg.finetune_config(), pretrained=(ckpt.params, None))
    save_checkpoint(Path(cfg.out) / "checkpoint.zip", res.params, ckpt.model, data.vocab, cfg.to_dict(), cfg.seed)
    return {"records.jsonl": records_jsonl([res.record])}


def cmd_selflabel(cfg, args):
    ckpt = _checkpoint(args, cfg)
    data = load_data(cfg, ckpt.vocab)
    target = data.transfer.target
    unlabeled = target.train.with_examples(ex.with_answer(None) for ex in target.train.examples)
    params, trace = self_label_finetune(ckpt.params, unlabeled, target.test, cfg.selflabel_config(), ckpt.model)
    save_checkpoint(Path(cfg.out) / "checkpoint.zip", params, ckpt.model, data.vocab, cfg.to_dict(), cfg.seed)
    svg = accuracy_curve_svg(trace.accuracy, reference=cfg.reference, title="self-labeling")
    return {"trace.csv": trace.to_csv(), "curve.svg": svg}


def cmd_eval(cfg, args):
    ckpt = _checkpoint(args, cfg)
    data = load_data(cfg, ckpt.vocab)
    test = data.transfer.target.test
    result = {"dataset": test.name, "split": test.split, "size": len(test),
              "accuracy": evaluate(ckpt.params, test, ckpt.model)}
    if all(ex.qtype is not None for ex in test.examples):
        result["qtype_accuracy"] = {str(k): v for k, v in eval_by_qtype(ckpt.params, test, ckpt.model).items()}
    return {"eval.json": json.dumps(result, sort_keys=True, indent=1) + "\n"}


def cmd_ablate(cfg, args):
    model = build_model(cfg.model, cfg.hyper)
    cache = {}
    data = {}

    def data_for(seed):
        if seed not in data:
            data[seed] = load_data(cfg, seed=seed).transfer
        return data[seed]

    files, records = {}, []
    axes = ("target", "source") if cfg.axis == "both" else (cfg.axis,)
    for axis in axes:
        table = ablate_fraction(axis, cfg.fractions, cfg.train_config(), cfg.seeds, data_for,
                                cfg.freeze_spec(), model, cfg.finetune_config(), cache)
        files[f"table_{axis}.csv"] = table.to_csv()
        records += table.records
    files["records.jsonl"] = records_jsonl(records)
    return files


def cmd_gensynth(cfg, args):
    if "synth" not in cfg.data:
        raise ConfigError("gen-synth needs data.synth")
    corpus = gen_synthetic(SynthConfig.from_dict(cfg.data["synth"]))
    paths = write_synthetic(corpus, Path(cfg.out) / "data")
    listing = "".join(f"{p.relative_to(cfg.out).as_posix()}\n" for p in paths)
    return {"files.txt": listing}


def cmd_export_attn(cfg, args):
    ckpt = _checkpoint(args, cfg)
    if ckpt.model.kind != "qacnn":
        raise ConfigError("export-attn needs a qacnn checkpoint")
    data = load_data(cfg, ckpt.vocab)
    test = data.target.test
    if not 0 <= cfg.example < len(test):
        raise ConfigError(f"example {cfg.example} out of range for {len(test)} test examples")
    raw = test.examples[cfg.example]
    enc = data.transfer.target.test.examples[cfg.example]
    choice = cfg.choice
    if choice is None:
        choice = int(ckpt.model.predict(ckpt.params, [enc])[0])
    if not 0 <= choice < len(raw.choices):
        raise ConfigError(f"choice {choice} out of range for {len(raw.choices)} choices")
    export = ckpt.model.export_attention(ckpt.params, raw, choice, vocab=ckpt.vocab)
    record = {"example": cfg.example, "answer": raw.answer, **export.to_dict()}
    return {"attention.json": json.dumps(record, sort_keys=True, indent=1) + "\n",
            "attention.svg": attention_heatmap_svg(export, title=" ".join(raw.question))}


HANDLERS = {
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "selflabel": cmd_selflabel,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gen-synth": cmd_gensynth,
    "export-attn": cmd_export_attn,
}


# -- argument handling ------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="mcqa-transfer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--seed", type=int, help="replaces the seed list with this one seed")
        s.add_argument("--out", help="output directory")
        s.add_argument("--checkpoint", help="checkpoint to start from")
        s.add_argument("--freeze", help="freeze preset for fine-tuning")
        s.add_argument("--fractions", help="comma-separated fractions for ablate")
        s.add_argument("--epochs", type=int, help="epoch budget of the command's training loop")
        if name == "export-attn":
            s.add_argument("--example", type=int, help="index into the target test split")
            s.add_argument("--choice", type=int, help="choice to render (default: the predicted one)")
    return p


def resolve_config(args):
    raw = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.config}: invalid JSON ({e.msg} at line {e.lineno})") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    raw["command"] = args.command
    if args.seed is not None:
        raw["seeds"] = [args.seed]
    if args.out is not None:
        raw["out"] = args.out
    if args.freeze is not None:
        raw["freeze"] = {**raw.get("freeze", {}), "preset": args.freeze}
    if args.fractions is not None:
        try:
            raw["fractions"] = [float(x) for x in args.fractions.split(",")]
        except ValueError:
            raise ConfigError(f"bad --fractions {args.fractions!r}") from None
    if args.epochs is not None:
        if args.command == "selflabel":
            raw["selflabel"] = {**raw.get("selflabel", {}), "epochs": args.epochs}
        elif args.command in ("finetune", "ablate") and raw.get("finetune") is not None:
            raw["finetune"] = {**raw["finetune"], "max_epochs": args.epochs}
        else:
            raw["train"] = {**raw.get("train", {}), "max_epochs": args.epochs}
    for key in ("example", "choice"):
        if getattr(args, key, None) is not None:
            raw[key] = getattr(args, key)
    try:
        return ExperimentConfig.from_dict(raw)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def run(argv=None):
    args = build_parser().parse_args(argv)
    cfg = resolve_config(args)
    files = HANDLERS[cfg.command](cfg, args)
    write_bundle(cfg.out, cfg.command, cfg.to_dict(), files)
    return cfg


def main(argv=None):
    try:
        run(argv)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError, ContractError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except McqaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
