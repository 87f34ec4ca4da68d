"""Synthetic MCQA corpora with a controllable source -> target domain shift.

Each story sentence pairs an entity token with an attribute token (the
attribute directly follows the entity) amid filler words. The question
names one entity and the correct choice carries that entity's attribute.
Wrong choices carry other attributes; where they come from sets the
question type:

* type 1: attributes that do not occur in the story;
* type 2: attributes of other story sentences;
* type 3: as type 2, and the asked-about sentence puts a filler word between
  the entity and its attribute.

The target side differs in two ways. A ``shift`` fraction of token
occurrences is re-spelled with target-only synonyms, and with probability
``echo`` the correct choice's second word repeats a filler from the asked
sentence, a cue that only target data can teach. The generator also emits
word vectors standing in for pretrained embeddings, in which a synonym lies
near its base token (cosine about ``1 / sqrt(1 + synonym_noise**2)``).

:data:`BENCHMARK` holds the training settings used with the default config.
"""
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .corpus import Dataset, McqaExample, Splits, save_dataset, write_vectors
from .errors import ConfigError
from .rng import stream

SYNONYM_PREFIX = "t"


@dataclass(frozen=True)
class SynthConfig:
    n_entities: int = 60
    n_attributes: int = 60
    n_fillers: int = 40
    n_qwords: int = 4
    sentences: int = 10
    sentence_len: int = 6
    choice_len: int = 2
    source_choices: int = 5
    target_choices: int = 4
    distractor_count: int = -1  # wrong choices drawn from the story for types 2/3; -1 means all
    shift: float = 0.3
    synonym_noise: float = 2.0
    echo: float = 1.0  # target only: chance the answer repeats a filler of the asked sentence
    embed_dim: int = 32
    qtype_mix: tuple = (0.2, 0.3, 0.5)
    source_sizes: tuple = (2000, 200, 500)
    target_sizes: tuple = (50, 100, 500)
    seed: int = 0

    def to_dict(self):
        d = asdict(self)
        d["qtype_mix"] = list(self.qtype_mix)
        d["source_sizes"] = list(self.source_sizes)
        d["target_sizes"] = list(self.target_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth fields {sorted(unknown)}")
        for key in ("qtype_mix", "source_sizes", "target_sizes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


# TrainConfig fields for the default benchmark: pre-training on the source,
# fine-tuning on the target, and the inner loop of self-labeling.
BENCHMARK = {
    "train": {"lr": 0.1, "batch_size": 32, "max_epochs": 30, "patience": 8},
    "finetune": {"lr": 0.03, "batch_size": 5, "max_epochs": 40, "patience": 10},
    "selflabel": {"epochs": 10},
    "selflabel_train": {"lr": 0.03, "batch_size": 5},
    "sweep": "ft-all",
}


class SynthCorpus(NamedTuple):
    source: Splits
    target: Splits
    vectors: dict
    synonyms: dict  # synonym -> base token
    config: SynthConfig


def _pools(cfg):
    return {
        "entity": [f"e{i}" for i in range(cfg.n_entities)],
        "attribute": [f"a{i}" for i in range(cfg.n_attributes)],
        "filler": [f"f{i}" for i in range(cfg.n_fillers)],
        "qword": [f"q{i}" for i in range(cfg.n_qwords)],
    }


def _validate(cfg):
    if not 0.0 <= cfg.shift <= 1.0:
        raise ConfigError(f"shift must lie in [0, 1], got {cfg.shift}")
    if not 0.0 <= cfg.echo <= 1.0:
        raise ConfigError(f"echo must lie in [0, 1], got {cfg.echo}")
    if len(cfg.qtype_mix) != 3 or min(cfg.qtype_mix) < 0 or sum(cfg.qtype_mix) <= 0:
        raise ConfigError(f"qtype_mix must be 3 non-negative weights, got {cfg.qtype_mix}")
    k = max(cfg.source_choices, cfg.target_choices)
    if min(cfg.source_choices, cfg.target_choices) < 2:
        raise ConfigError("each side needs at least 2 choices")
    if cfg.n_entities < cfg.sentences:
        raise ConfigError(f"{cfg.n_entities} entities cannot fill {cfg.sentences} sentences")
    if cfg.n_attributes < cfg.sentences + k - 1:
        raise ConfigError(f"{cfg.n_attributes} attributes are too few for {cfg.sentences} sentences "
                          f"plus {k - 1} outside distractors")
    in_story = k - 1 if cfg.distractor_count < 0 else cfg.distractor_count
    if (cfg.qtype_mix[1] > 0 or cfg.qtype_mix[2] > 0) and in_story > cfg.sentences - 1:
        raise ConfigError(f"{in_story} in-story distractors need more than {cfg.sentences} sentences")
    min_len = 3 if cfg.qtype_mix[2] > 0 else 2
    if cfg.sentence_len < min_len:
        raise ConfigError(f"sentence_len must be at least {min_len}")
    if cfg.choice_len < 1 or cfg.n_fillers < 1 or cfg.n_qwords < 1:
        raise ConfigError("choice_len, n_fillers and n_qwords must be positive")
    if cfg.embed_dim < 1:
        raise ConfigError("embed_dim must be positive")


def _make_vectors(cfg, pools):
    rng = stream(cfg.seed, "synth/vectors")
    d = cfg.embed_dim
    vectors, synonyms = {}, {}
    for kind in ("entity", "attribute", "filler", "qword"):
        for tok in pools[kind]:
            base = rng.normal(size=d) / np.sqrt(d)
            noise = rng.normal(size=d) / np.sqrt(d)
            vectors[tok] = base
            syn = SYNONYM_PREFIX + tok
            vectors[syn] = base + cfg.synonym_noise * noise
            synonyms[syn] = tok
    return vectors, synonyms


def _example(rng, cfg, pools, n_choices, shift, qmix):
    # NOTE: draw order is part of the byte-for-byte reproducibility contract.
    ents = rng.choice(len(pools["entity"]), size=cfg.sentences, replace=False)
    attrs = rng.choice(len(pools["attribute"]), size=cfg.sentences, replace=False)
    asked = int(rng.integers(cfg.sentences))
    mix = np.asarray(qmix, dtype=float)
    qtype = int(rng.choice(3, p=mix / mix.sum())) + 1
    fillers = pools["filler"]

    story, asked_fillers = [], []
    for n in range(cfg.sentences):
        gap = 1 if (qtype == 3 and n == asked) else 0
        span = 2 + gap
        start = int(rng.integers(cfg.sentence_len - span + 1))
        sent = [fillers[i] for i in rng.integers(len(fillers), size=cfg.sentence_len)]
        first, last = pools["entity"][ents[n]], pools["attribute"][attrs[n]]
        sent[start] = first
        sent[start + span - 1] = last
        if n == asked:
            asked_fillers = [w for i, w in enumerate(sent) if i not in (start, start + span - 1)]
        story.append(sent)

    question = [pools["qword"][int(rng.integers(len(pools["qword"])))], pools["entity"][ents[asked]]]

    n_wrong = n_choices - 1
    others = [int(attrs[n]) for n in range(cfg.sentences) if n != asked]
    outside = np.setdiff1d(np.arange(len(pools["attribute"])), attrs)
    if qtype == 1:
        wrong = list(rng.choice(outside, size=n_wrong, replace=False))
    else:
        in_story = n_wrong if cfg.distractor_count < 0 else min(cfg.distractor_count, n_wrong)
        wrong = list(rng.choice(others, size=in_story, replace=False))
        wrong += list(rng.choice(outside, size=n_wrong - in_story, replace=False))
    attr_ids = [int(attrs[asked])] + [int(a) for a in wrong]
    order = rng.permutation(n_choices)
    choices = []
    for j in order:
        c = [pools["attribute"][attr_ids[j]]]
        c += [fillers[i] for i in rng.integers(len(fillers), size=cfg.choice_len - 1)]
        choices.append(c)
    answer = int(np.flatnonzero(order == 0)[0])
    if shift > 0 and cfg.choice_len > 1 and rng.random() < cfg.echo:
        choices[answer][1] = asked_fillers[int(rng.integers(len(asked_fillers)))]
    if shift > 0:
        def respell(tokens):
            flip = rng.random(len(tokens)) < shift
            return [SYNONYM_PREFIX + t if f else t for t, f in zip(tokens, flip)]
        story = [respell(s) for s in story]
        question = respell(question)
        choices = [respell(c) for c in choices]
    return McqaExample(story, question, choices, answer=answer, qtype=qtype)


def _side(cfg, pools, side, sizes, n_choices, shift, qmix):
    out = []
    for split, size in zip(("train", "dev", "test"), sizes):
        rng = stream(cfg.seed, f"synth/{side}/{split}")
        examples = [_example(rng, cfg, pools, n_choices, shift, qmix) for _ in range(size)]
        out.append(Dataset(f"synth-{side}", split, examples, choice_count=n_choices))
    return Splits(*out)


def gen_synthetic(cfg):
    """Generate source and target splits plus stand-in pretrained vectors."""
    _validate(cfg)
    pools = _pools(cfg)
    vectors, synonyms = _make_vectors(cfg, pools)
    source = _side(cfg, pools, "source", cfg.source_sizes, cfg.source_choices, 0.0,
                   cfg.qtype_mix)
    target = _side(cfg, pools, "target", cfg.target_sizes, cfg.target_choices, cfg.shift,
                   cfg.qtype_mix)
    return SynthCorpus(source, target, vectors, synonyms, cfg)


def write_synthetic(corpus, out_dir):
    """Write the six split files and ``vectors.txt``; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for side, splits in (("source", corpus.source), ("target", corpus.target)):
        for ds in splits:
            p = out_dir / f"{side}_{ds.split}.jsonl"
            save_dataset(ds, p)
            paths.append(p)
    p = out_dir / "vectors.txt"
    write_vectors(corpus.vectors, p)
    paths.append(p)
    return paths


def encode_corpus(corpus, seed=0):
    """Vocabulary over all six splits plus the encoded :class:`TransferData`.

    The generated vectors initialise the embedding table; rows they do not
    cover draw from the ``embed-init`` stream of ``seed``.
    """
    from .corpus import build_vocab, embeddings_from_vectors, encode_dataset
    from .transfer import TransferData

    vocab = build_vocab([*corpus.source, *corpus.target])
    emb = embeddings_from_vectors(corpus.vectors, vocab, corpus.config.embed_dim, seed)

    def enc(splits):
        return Splits(*[encode_dataset(ds, vocab) for ds in splits])
    return vocab, TransferData(enc(corpus.source), enc(corpus.target), len(vocab), emb)
