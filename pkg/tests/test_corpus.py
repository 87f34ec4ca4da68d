import json
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from mcqa_transfer.corpus import (
    PAD, UNK, Dataset, McqaExample, Splits, build_vocab, check_split_counts, embeddings_from_vectors,
    encode_dataset, load_dataset, load_embeddings, make_batch, read_vectors, save_dataset, subsample,
    tokenize, write_vectors,
)
from mcqa_transfer.errors import ContractError, DomainError, ParseError, ValidationError


def ex(story=("the cat sat .",), question="where ?", choices=("mat", "hat", "bat", "cat"), answer=1, qtype=None):
    return McqaExample([tokenize(s) for s in story], tokenize(question), [tokenize(c) for c in choices],
                       answer, qtype)


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


RECORD = {"story": ["Mary went home.", "John, too!"], "question": "Who went?",
          "choices": ["Mary", "John", "Bill", "Sue"], "answer": 1, "qtype": 2}


def test_tokenize_lowercases_and_splits_punctuation():
    assert tokenize("Mary's dog, Rex!") == ["mary", "'", "s", "dog", ",", "rex", "!"]


def test_load_valid_record(tmp_path):
    ds = load_dataset(write_lines(tmp_path / "toy_train.jsonl", [RECORD]))
    assert len(ds) == 1 and ds.split == "train" and ds.choice_count == 4
    e = ds[0]
    assert e.answer == 1 and e.qtype == 2
    assert e.story == (("mary", "went", "home", "."), ("john", ",", "too", "!"))


def test_answer_out_of_range_reports_line(tmp_path):
    bad = dict(RECORD, answer=7)
    with pytest.raises(ValidationError) as info:
        load_dataset(write_lines(tmp_path / "d.jsonl", [RECORD, bad]))
    assert info.value.line == 2
    assert ":2" in str(info.value)


def test_malformed_json_reports_line(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps(RECORD) + "\n{not json\n", encoding="utf-8")
    with pytest.raises(ParseError) as info:
        load_dataset(p)
    assert info.value.line == 2


@pytest.mark.parametrize("patch", [
    {"story": []}, {"story": ["ok", ""]}, {"question": ""}, {"choices": ["one"]},
    {"qtype": 4}, {"answer": "1"}, {"extra": 1}, {"choices": "a b"},
])
def test_invalid_records_rejected(tmp_path, patch):
    with pytest.raises(ParseError):
        load_dataset(write_lines(tmp_path / "d.jsonl", [dict(RECORD, **patch)]))


def test_mixed_choice_counts_rejected(tmp_path):
    five = dict(RECORD, choices=RECORD["choices"] + ["Tom"])
    with pytest.raises(ValidationError):
        load_dataset(write_lines(tmp_path / "d.jsonl", [RECORD, five]))


def test_round_trip_identity(tmp_path):
    ds = Dataset("toy", "dev", [ex(), ex(story=("a b", "c d e"), answer=None, qtype=3), ex(answer=0)])
    p = tmp_path / "toy_dev.jsonl"
    save_dataset(ds, p)
    back = load_dataset(p, name="toy")
    assert back == ds
    save_dataset(back, tmp_path / "again.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == p.read_bytes()


def test_round_trip_through_ids(tmp_path):
    ds = Dataset("toy", "train", [ex(), ex(story=("x y z",), answer=3)])
    vocab = build_vocab([ds])
    save_dataset(encode_dataset(ds, vocab), tmp_path / "t.jsonl", vocab=vocab)
    assert load_dataset(tmp_path / "t.jsonl", name="toy") == ds


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.sampled_from("a b c d e . ,".split()), min_size=1, max_size=5),
                min_size=1, max_size=4),
       st.integers(0, 2))
def test_round_trip_property(sentences, answer):
    import tempfile
    e = McqaExample(sentences, ["q"], [["x"], ["y"], ["z"]], answer)
    ds = Dataset("p", "train", [e])
    with tempfile.TemporaryDirectory() as d:
        save_dataset(ds, Path(d) / "p.jsonl")
        assert load_dataset(Path(d) / "p.jsonl") == ds


# -- vocabulary ------------------------------------------------------------------

def _corpus(text):
    return Dataset("c", "train", [McqaExample([tokenize(text)], ["q"], [["q"], ["q"]])])


def test_build_vocab_min_count():
    v1 = build_vocab([_corpus("a a b")])
    assert "a" in v1 and "b" in v1
    v2 = build_vocab([_corpus("a a b")], min_count=2)
    assert "a" in v2 and "b" not in v2
    assert v2.encode(["b"]) == [UNK]


def test_build_vocab_order_and_determinism():
    v = build_vocab([_corpus("b a c c a c")])
    assert v.itos[:2] == ["<pad>", "<unk>"]
    # q appears 3 times via question and choices, c 3 times, a 2, b 1.
    assert v.itos[2:] == ["c", "q", "a", "b"]
    assert build_vocab([_corpus("b a c c a c")]).to_bytes() == v.to_bytes()


def test_encode_is_total_and_never_pad():
    v = build_vocab([_corpus("a b")])
    ids = v.encode(["a", "zzz", "<pad>", "<unk>"])
    assert ids[1] == UNK and ids[2] == UNK and ids[3] == UNK
    assert PAD not in ids


def test_build_vocab_needs_datasets():
    with pytest.raises(ContractError):
        build_vocab([])


# -- vectors ------------------------------------------------------------------------

def test_load_embeddings(tmp_path):
    v = build_vocab([_corpus("a b c")])
    p = tmp_path / "vec.txt"
    write_vectors({"a": np.array([1.0, 2.0, 3.0]), "<pad>": np.array([9.0, 9.0, 9.0])}, p)
    emb = load_embeddings(p, v, 3, seed=5)
    assert_array_equal(emb.matrix[v.stoi["a"]], [1.0, 2.0, 3.0])
    assert_array_equal(emb.matrix[PAD], np.zeros(3))
    assert emb.found == 1 and emb.frozen
    other = emb.matrix[v.stoi["b"]]
    assert np.all(np.abs(other) < 0.1)
    assert_array_equal(load_embeddings(p, v, 3, seed=5).matrix, emb.matrix)


def test_vector_arity_mismatch_reports_line(tmp_path):
    p = tmp_path / "vec.txt"
    p.write_text("a 1 2 3\nb 1 2\n", encoding="utf-8")
    with pytest.raises(ParseError) as info:
        read_vectors(p, 3)
    assert info.value.line == 2


def test_missing_rows_do_not_depend_on_file_coverage():
    v = build_vocab([_corpus("a b c")])
    full = embeddings_from_vectors({}, v, 4, seed=1).matrix
    part = embeddings_from_vectors({"a": np.ones(4)}, v, 4, seed=1).matrix
    assert_array_equal(full[v.stoi["b"]], part[v.stoi["b"]])


# -- subsampling -------------------------------------------------------------------

def _numbered(n):
    return Dataset("n", "train", [McqaExample([[str(i)]], ["q"], [["a"], ["b"]], 0) for i in range(n)])


def test_subsample_full_empty_and_paper_count():
    ds = _numbered(9848)
    assert subsample(ds, 1.0, 0).examples == ds.examples
    assert len(subsample(ds, 0.0, 0)) == 0
    assert len(subsample(ds, 0.25, 0)) == 2462


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 50), st.integers(1, 120))
def test_subsample_nesting(f1, f2, seed, n):
    f1, f2 = sorted((f1, f2))
    ds = _numbered(n)
    small = subsample(ds, f1, seed).examples
    big = subsample(ds, f2, seed).examples
    assert set(small) <= set(big)
    order = {e: i for i, e in enumerate(ds.examples)}
    assert [order[e] for e in big] == sorted(order[e] for e in big)


def test_subsample_errors():
    with pytest.raises(DomainError):
        subsample(_numbered(4), 1.5, 0)
    with pytest.raises(ContractError):
        subsample(_numbered(4).with_examples([], split="dev"), 0.5, 0)


# -- batching -------------------------------------------------------------------

def test_make_batch_pads_and_truncates():
    v = build_vocab([_corpus("a b c d e f")])
    e1 = McqaExample([v.encode("a b c".split()), v.encode(["d"])], v.encode(["e"]),
                     [v.encode(["a"]), v.encode(["b", "c"])], 1)
    e2 = McqaExample([v.encode(["f"])], v.encode(["a", "b"]), [v.encode(["c"]), v.encode(["d"])])
    b = make_batch([e1, e2], max_sentences=60, max_len=2)
    assert b.story.shape == (2, 2, 2)
    assert_array_equal(b.sentence_mask, [[True, True], [True, False]])
    assert_array_equal(b.answers, [1, -1])
    assert b.choices.shape == (2, 2, 2)
    cut = make_batch([e1], max_sentences=1)
    assert cut.story.shape == (1, 1, 3)


# -- real dataset split counts -----------------------------------------------------------

TOEFL_DIR = os.environ.get("MCQA_TOEFL_DIR")


@pytest.mark.skipif(not TOEFL_DIR, reason="set MCQA_TOEFL_DIR to a converted TOEFL directory")
def test_toefl_split_counts():
    d = Path(TOEFL_DIR)
    splits = Splits(*(load_dataset(d / f"{s}.jsonl") for s in ("train", "dev", "test")))
    assert check_split_counts(splits, "toefl") == (717, 124, 122)


def test_split_count_check_detects_mismatch():
    with pytest.raises(ValidationError):
        check_split_counts(Splits(_numbered(717), _numbered(124), _numbered(121)), "toefl")
    assert check_split_counts(Splits(_numbered(717), _numbered(124), _numbered(122)), "toefl") == (717, 124, 122)
