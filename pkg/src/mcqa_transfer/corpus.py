"""Multi-choice QA data: canonical file format, vocabulary, word vectors, batching.

A dataset file holds one JSON object per line::

    {"story": ["Sentence one.", "Sentence two."], "question": "...",
     "choices": ["...", "...", "...", "..."], "answer": 2, "qtype": 1}

``answer`` (0-based) and ``qtype`` (1-3) are optional. Strings are tokenised
on load, so a saved dataset holds space-joined tokens and reloads to the
same examples.
"""
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, ContractError, DomainError, ParseError, ValidationError
from .rng import stream

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"

# Official split sizes (train, dev, test) for converted real datasets.
KNOWN_SPLITS = {
    "toefl": (717, 124, 122),
    "mc160": (280, 120, 240),
    "mc500": (1200, 200, 600),
    "movieqa": (9848, 1958, None),
}

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text):
    """Lowercase, then split on whitespace with punctuation as separate tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class McqaExample:
    story: tuple
    question: tuple
    choices: tuple
    answer: Optional[int] = None
    qtype: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "story", tuple(tuple(s) for s in self.story))
        object.__setattr__(self, "question", tuple(self.question))
        object.__setattr__(self, "choices", tuple(tuple(c) for c in self.choices))
        if not self.story:
            raise ValidationError("story has no sentences")
        if any(len(s) == 0 for s in self.story):
            raise ValidationError("story contains an empty sentence")
        if not self.question:
            raise ValidationError("empty question")
        if len(self.choices) < 2:
            raise ValidationError(f"need at least 2 choices, got {len(self.choices)}")
        if any(len(c) == 0 for c in self.choices):
            raise ValidationError("empty answer choice")
        if self.answer is not None and not 0 <= self.answer < len(self.choices):
            raise ValidationError(f"answer {self.answer} out of range for {len(self.choices)} choices")
        if self.qtype is not None and self.qtype not in (1, 2, 3):
            raise ValidationError(f"qtype must be 1, 2 or 3, got {self.qtype}")

    def with_answer(self, answer):
        return replace(self, answer=None if answer is None else int(answer))


@dataclass(frozen=True)
class Dataset:
    name: str
    split: str
    examples: tuple
    choice_count: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        counts = {len(ex.choices) for ex in self.examples}
        if len(counts) > 1:
            raise ValidationError(f"dataset {self.name!r} mixes choice counts {sorted(counts)}")
        if counts:
            (k,) = counts
            if self.choice_count is not None and self.choice_count != k:
                raise ValidationError(f"dataset {self.name!r} declares {self.choice_count} choices, found {k}")
            object.__setattr__(self, "choice_count", k)

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    @property
    def labeled(self):
        return all(ex.answer is not None for ex in self.examples)

    def with_examples(self, examples, **kw):
        return replace(self, examples=tuple(examples), **kw)


class Splits(NamedTuple):
    train: Dataset
    dev: Dataset
    test: Dataset


# -- file format ------------------------------------------------------------

def _parse_record(obj, path, lineno):
    if not isinstance(obj, dict):
        raise ParseError("record is not an object", path, lineno)
    unknown = set(obj) - {"story", "question", "choices", "answer", "qtype", "id"}
    if unknown:
        raise ParseError(f"unknown fields {sorted(unknown)}", path, lineno)
    story, question, choices = obj.get("story"), obj.get("question"), obj.get("choices")
    if not isinstance(story, list) or not all(isinstance(s, str) for s in story):
        raise ParseError("'story' must be an array of strings", path, lineno)
    if not isinstance(question, str):
        raise ParseError("'question' must be a string", path, lineno)
    if not isinstance(choices, list) or not all(isinstance(c, str) for c in choices):
        raise ParseError("'choices' must be an array of strings", path, lineno)
    answer, qtype = obj.get("answer"), obj.get("qtype")
    for key, val in (("answer", answer), ("qtype", qtype)):
        if val is not None and (isinstance(val, bool) or not isinstance(val, int)):
            raise ParseError(f"'{key}' must be an integer", path, lineno)
    try:
        return McqaExample(
            story=[tokenize(s) for s in story],
            question=tokenize(question),
            choices=[tokenize(c) for c in choices],
            answer=answer,
            qtype=qtype,
        )
    except ValidationError as exc:
        raise ValidationError(str(exc), path, lineno) from None


def _guess_split(stem):
    for split in ("train", "dev", "test"):
        if stem.endswith(split):
            return split
    return "train"


def load_dataset(path, name=None, split=None):
    """Read a canonical line-delimited JSON dataset file."""
    path = Path(path)
    examples = []
    choice_count = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON ({exc.msg})", path, lineno) from None
            ex = _parse_record(obj, path, lineno)
            if choice_count is None:
                choice_count = len(ex.choices)
            elif len(ex.choices) != choice_count:
                raise ValidationError(
                    f"{len(ex.choices)} choices where the file uses {choice_count}", path, lineno)
            examples.append(ex)
    return Dataset(name or path.stem, split or _guess_split(path.stem), tuple(examples))


def _text(tokens, vocab):
    if vocab is not None:
        tokens = vocab.decode(tokens)
    return " ".join(tokens)


def dump_record(ex, vocab=None):
    rec = {
        "story": [_text(s, vocab) for s in ex.story],
        "question": _text(ex.question, vocab),
        "choices": [_text(c, vocab) for c in ex.choices],
    }
    if ex.answer is not None:
        rec["answer"] = ex.answer
    if ex.qtype is not None:
        rec["qtype"] = ex.qtype
    return json.dumps(rec, ensure_ascii=False, sort_keys=True)


def save_dataset(ds, path, vocab=None):
    """Write ``ds`` in the canonical format. Pass ``vocab`` if examples hold ids."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in ds.examples:
            fh.write(dump_record(ex, vocab) + "\n")


def check_split_counts(splits, dataset):
    """Compare loaded split sizes with the official counts for ``dataset``."""
    expected = KNOWN_SPLITS[dataset.lower()]
    got = tuple(len(s) for s in splits)
    for want, have, label in zip(expected, got, ("train", "dev", "test")):
        if want is not None and want != have:
            raise ValidationError(f"{dataset} {label} split has {have} examples, expected {want}")
    return got


# -- vocabulary ----------------------------------------------------------------

class Vocab:
    """Token <-> id map with PAD=0 and UNK=1 reserved."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            tokens = [PAD_TOKEN, UNK_TOKEN] + [t for t in tokens if t not in (PAD_TOKEN, UNK_TOKEN)]
        self.itos = tokens
        self.stoi = {t: i for i, t in enumerate(tokens)}
        if len(self.stoi) != len(tokens):
            raise ContractError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def __contains__(self, token):
        return token in self.stoi

    def encode(self, tokens):
        # Real tokens never map to PAD, even one literally spelled "<pad>".
        return [self.stoi.get(t, UNK) if t != PAD_TOKEN else UNK for t in tokens]

    def decode(self, ids):
        return [self.itos[i] for i in ids]

    def to_bytes(self):
        return json.dumps(self.itos, ensure_ascii=False).encode("utf-8")

    @classmethod
    def from_list(cls, tokens):
        return cls(tokens)


def _example_tokens(ex):
    for s in ex.story:
        yield from s
    yield from ex.question
    for c in ex.choices:
        yield from c


def build_vocab(datasets, min_count=1):
    """Ids by descending corpus frequency, ties broken lexicographically."""
    if not datasets:
        raise ContractError("build_vocab needs at least one dataset")
    counts = Counter()
    for ds in datasets:
        for ex in ds.examples:
            counts.update(_example_tokens(ex))
    counts.pop(PAD_TOKEN, None)
    counts.pop(UNK_TOKEN, None)
    keep = [t for t, c in counts.items() if c >= max(min_count, 1)]
    keep.sort(key=lambda t: (-counts[t], t))
    return Vocab([PAD_TOKEN, UNK_TOKEN] + keep)


def encode_example(ex, vocab):
    return replace(
        ex,
        story=[vocab.encode(s) for s in ex.story],
        question=vocab.encode(ex.question),
        choices=[vocab.encode(c) for c in ex.choices],
    )


def encode_dataset(ds, vocab):
    return ds.with_examples([encode_example(ex, vocab) for ex in ds.examples])


# -- pretrained vectors ----------------------------------------------------------

@dataclass
class EmbeddingMatrix:
    matrix: np.ndarray
    frozen: bool = True
    found: int = 0

    @property
    def d(self):
        return self.matrix.shape[1]

    @property
    def vocab_size(self):
        return self.matrix.shape[0]


def read_vectors(path, d):
    """Parse a ``token v1 ... vd`` text file into a dict."""
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and d != 1 and all(p.isdigit() for p in parts):
                continue  # word2vec-style "count dim" header
            if len(parts) != d + 1:
                raise ParseError(f"expected token plus {d} values, got {len(parts) - 1} values", path, lineno)
            try:
                vectors[parts[0]] = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise ParseError("non-numeric vector component", path, lineno) from None
    return vectors


def write_vectors(vectors, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tok in sorted(vectors):
            fh.write(tok + " " + " ".join(repr(float(v)) for v in vectors[tok]) + "\n")


def embeddings_from_vectors(vectors, vocab, d, seed=0):
    # The whole matrix is drawn first so a row's random init does not depend
    # on which other tokens the file happens to cover.
    matrix = stream(seed, "embed-init").uniform(-0.1, 0.1, size=(len(vocab), d))
    found = 0
    for tok, i in vocab.stoi.items():
        vec = vectors.get(tok)
        if vec is not None and i != PAD:
            if len(vec) != d:
                raise ParseError(f"vector for {tok!r} has {len(vec)} dims, expected {d}")
            matrix[i] = vec
            found += 1
    matrix[PAD] = 0.0
    return EmbeddingMatrix(matrix, frozen=True, found=found)


def load_embeddings(path, vocab, d, seed=0):
    """Initialise a |V|×d matrix from a text vector file (GloVe layout)."""
    return embeddings_from_vectors(read_vectors(path, d), vocab, d, seed)


# -- subsampling -------------------------------------------------------------------

def subsample(ds, fraction, seed):
    """Keep ``floor(fraction * N)`` training examples, original order preserved.

    The kept set is a prefix of one seeded permutation, so smaller fractions
    are always subsets of larger ones.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DomainError(f"fraction must lie in [0, 1], got {fraction}")
    if ds.split != "train":
        raise ContractError(f"subsample applies to train splits, got {ds.split!r}")
    n = len(ds)
    k = min(n, int(math.floor(fraction * n + 1e-9)))
    perm = stream(seed, "subsample").permutation(n)
    keep = np.sort(perm[:k])
    return ds.with_examples([ds.examples[i] for i in keep])


def concat(datasets, name=None, split="train"):
    """Join datasets that may differ in choice count (kept as a plain list)."""
    examples = [ex for ds in datasets for ex in ds.examples]
    return MixedDataset(name or "+".join(ds.name for ds in datasets), split, tuple(examples))


@dataclass(frozen=True)
class MixedDataset:
    """Like :class:`Dataset` but without the uniform choice-count rule."""
    name: str
    split: str
    examples: tuple
    choice_count: Optional[int] = field(default=None)

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    @property
    def labeled(self):
        return all(ex.answer is not None for ex in self.examples)

    def with_examples(self, examples, **kw):
        return replace(self, examples=tuple(examples), **kw)


# -- batching ---------------------------------------------------------------------

@dataclass
class Batch:
    """Padded id arrays for a group of encoded examples (PAD=0 everywhere)."""
    story: np.ndarray      # B x N x L
    question: np.ndarray   # B x Lq
    choices: np.ndarray    # B x K x Lc
    choice_mask: np.ndarray  # B x K
    answers: np.ndarray    # B, -1 where unlabeled

    def __len__(self):
        return self.story.shape[0]

    @property
    def word_mask(self):
        return self.story != PAD

    @property
    def sentence_mask(self):
        return (self.story != PAD).any(axis=-1)

    @property
    def question_mask(self):
        return self.question != PAD


def make_batch(examples, max_sentences=60, max_len=40, choice_len=None, max_choice_len=40):
    """Pad encoded examples into a :class:`Batch`.

    Stories keep their first ``max_sentences`` sentences and each sentence,
    question and choice keeps its first ``max_len`` (``max_choice_len``)
    tokens. ``choice_len`` pads every choice to exactly that length.
    """
    if not examples:
        raise ContractError("cannot batch zero examples")
    if max_sentences < 1 or max_len < 1:
        raise ConfigError("truncation bounds must be positive")
    stories = [[s[:max_len] for s in ex.story[:max_sentences]] for ex in examples]
    questions = [ex.question[:max_len] for ex in examples]
    clen = choice_len if choice_len is not None else max_choice_len
    choices = [[c[:clen] for c in ex.choices] for ex in examples]
    b = len(examples)
    n = max(len(s) for s in stories)
    ln = max(len(w) for s in stories for w in s)
    lq = max(len(q) for q in questions)
    k = max(len(c) for c in choices)
    lc = choice_len if choice_len is not None else max(len(w) for c in choices for w in c)
    story = np.zeros((b, n, ln), dtype=np.int64)
    question = np.zeros((b, lq), dtype=np.int64)
    choice_arr = np.zeros((b, k, lc), dtype=np.int64)
    cmask = np.zeros((b, k), dtype=bool)
    answers = np.full(b, -1, dtype=np.int64)
    for i, ex in enumerate(examples):
        for j, sent in enumerate(stories[i]):
            story[i, j, :len(sent)] = sent
        question[i, :len(questions[i])] = questions[i]
        for j, c in enumerate(choices[i]):
            choice_arr[i, j, :len(c)] = c
            cmask[i, j] = True
        if ex.answer is not None:
            answers[i] = ex.answer
    return Batch(story, question, choice_arr, cmask, answers)
