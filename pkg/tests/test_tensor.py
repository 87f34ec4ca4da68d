import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from gradcheck import check_grads
from mcqa_transfer import tensor as T
from mcqa_transfer.errors import ConfigError, ContractError, DimensionError, DomainError
from mcqa_transfer.params import ParamStore, sgd_step
from mcqa_transfer.rng import stream
from mcqa_transfer.tensor import Graph, Tensor, backward


def leaf(a):
    return Tensor(np.array(a, dtype=float), requires_grad=True)


# -- oracles ------------------------------------------------------------------

def matmul_oracle(a, b):
    m, k = len(a), len(a[0])
    n = len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(n)] for i in range(m)]


def conv1d_oracle(x, w, b):
    """Explicit sliding window with zero padding, then ReLU."""
    L, d_in = x.shape
    width, _, d_out = w.shape
    pad = width // 2
    out = np.zeros((L, d_out))
    for t in range(L):
        for o in range(d_out):
            acc = b[o]
            for j in range(width):
                src = t + j - pad
                if 0 <= src < L:
                    for i in range(d_in):
                        acc += x[src, i] * w[j, i, o]
            out[t, o] = max(acc, 0.0)
    return out


# -- matmul ---------------------------------------------------------------------

def test_matmul_identity():
    a = np.array([[1.5, -2.0], [0.25, 3.0]])
    assert_array_equal(T.matmul(Tensor(a), Tensor(np.eye(2))).data, a)


def test_matmul_oracle_value():
    out = T.matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5], [6]]))
    assert_array_equal(out.data, [[17], [39]])
    assert matmul_oracle([[1, 2], [3, 4]], [[5], [6]]) == [[17], [39]]


def test_matmul_random_matches_loop_oracle():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, matmul_oracle(a.tolist(), b.tolist()), atol=1e-12)


def test_matmul_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


# -- softmax ---------------------------------------------------------------------

def test_softmax_examples():
    assert_allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    for c in (-1e6, -3.0, 0.0, 7.5, 1e6):
        assert_allclose(T.softmax(Tensor([c] * 4)).data, [0.25] * 4, atol=1e-15)
    big = T.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(big))
    assert_allclose(big, [1.0, 0.0], atol=1e-300)


def test_softmax_empty_is_domain_error():
    with pytest.raises(DomainError):
        T.softmax(Tensor(np.zeros(0)))


def test_softmax_mask():
    p = T.softmax(Tensor([1.0, 5.0, 2.0]), mask=np.array([True, False, True])).data
    assert p[1] == 0.0
    assert_allclose(p[[0, 2]], np.exp([1, 2]) / np.exp([1, 2]).sum())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12), st.floats(-1e3, 1e3))
def test_softmax_normalised_and_shift_invariant(xs, c):
    x = np.array(xs)
    p = T.softmax(Tensor(x)).data
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-9
    assert_allclose(T.softmax(Tensor(x + c)).data, p, atol=1e-12, rtol=0)


def test_log_softmax_matches_log_of_softmax():
    x = np.random.default_rng(1).normal(size=(3, 5))
    assert_allclose(T.log_softmax(Tensor(x)).data, np.log(T.softmax(Tensor(x)).data), atol=1e-14)


# -- embed_lookup -------------------------------------------------------------------

def test_embed_lookup_empty_and_duplicates():
    table = leaf(np.arange(12.0).reshape(4, 3))
    assert T.embed_lookup(table, []).shape == (0, 3)
    out = T.embed_lookup(table, [2, 2]).data
    assert_array_equal(out[0], out[1])
    assert_array_equal(out[0], table.data[2])


def test_embed_lookup_grad_scatters():
    table = leaf(np.random.default_rng(2).normal(size=(5, 3)))
    backward(T.embed_lookup(table, [1, 3]).sum())
    expect = np.zeros((5, 3))
    expect[[1, 3]] = 1.0
    assert_array_equal(table.grad, expect)


def test_embed_lookup_duplicate_ids_accumulate():
    table = leaf(np.zeros((3, 2)))
    backward(T.embed_lookup(table, [0, 0, 2]).sum())
    assert_array_equal(table.grad, [[2, 2], [0, 0], [1, 1]])


def test_embed_lookup_out_of_range_names_id():
    with pytest.raises(IndexError, match="7"):
        T.embed_lookup(leaf(np.zeros((4, 2))), [1, 7])


# -- conv1d ------------------------------------------------------------------------

def test_conv1d_width_one_identity():
    x = np.array([[1.0, -2.0], [-0.5, 3.0], [0.0, 4.0]])
    w = np.eye(2).reshape(1, 2, 2)
    assert_array_equal(T.conv1d(Tensor(x), Tensor(w)).data, np.maximum(x, 0))


def test_conv1d_zero_filters():
    out = T.conv1d(Tensor(np.ones((5, 3))), Tensor(np.zeros((3, 3, 2))))
    assert_array_equal(out.data, np.zeros((5, 2)))


def test_conv1d_matches_loop_oracle():
    rng = np.random.default_rng(3)
    x, w, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 3, 2)), rng.normal(size=2)
    out = T.conv1d(Tensor(x), Tensor(w), Tensor(b)).data
    assert_allclose(out, conv1d_oracle(x, w, b), atol=1e-12, rtol=0)


def test_conv1d_batched_equals_per_item():
    rng = np.random.default_rng(4)
    x, w = rng.normal(size=(2, 3, 6, 4)), rng.normal(size=(5, 4, 3))
    out = T.conv1d(Tensor(x), Tensor(w)).data
    for i in range(2):
        for j in range(3):
            assert_allclose(out[i, j], conv1d_oracle(x[i, j], w, np.zeros(3)), atol=1e-12)


def test_conv1d_even_width_rejected():
    with pytest.raises(ConfigError):
        T.conv1d(Tensor(np.ones((3, 2))), Tensor(np.ones((2, 2, 2))))


# -- tmax -----------------------------------------------------------------------

def test_tmax_tie_splits_gradient():
    x = leaf([1.0, 3.0, 3.0, 0.0])
    backward(T.tmax(x, axis=0))
    assert_array_equal(x.grad, [0.0, 0.5, 0.5, 0.0])


def test_tmax_masked_and_empty_slices():
    x = leaf([[1.0, 9.0], [4.0, 2.0]])
    mask = np.array([[True, False], [False, False]])
    out = T.tmax(x, axis=1, mask=mask)
    assert_array_equal(out.data, [1.0, 0.0])
    backward(out.sum())
    assert_array_equal(x.grad, [[1, 0], [0, 0]])


# -- backward -----------------------------------------------------------------------

def test_backward_sum_gives_ones():
    x = leaf(np.random.default_rng(5).normal(size=(2, 3)))
    backward(x.sum())
    assert_array_equal(x.grad, np.ones((2, 3)))


def test_cross_entropy_equal_logits_closed_form():
    x = leaf(np.full((1, 4), 0.7))
    backward(T.cross_entropy(x, np.array([2])))
    assert_allclose(x.grad, [[0.25, 0.25, -0.75, 0.25]], atol=1e-15)


def test_backward_requires_scalar():
    with pytest.raises(ContractError):
        backward(leaf([1.0, 2.0]) * 2.0)


def test_independent_tensor_gets_no_grad():
    x, y = leaf([1.0, 2.0]), leaf([3.0])
    loss = (x * x).sum()
    backward(loss)
    assert y.grad is None
    assert np.count_nonzero(x.grad) == 2


def test_constant_inputs_keep_no_grad():
    x, c = leaf([1.0, 2.0]), Tensor([3.0, 4.0])
    backward((x * c).sum())
    assert c.grad is None and not c.requires_grad


def test_graph_is_topological_and_visits_each_op_once():
    x = leaf([1.0, -2.0, 3.0])
    h = T.relu(x * 2.0)
    loss = (h * h + h).sum()
    g = Graph.trace(loss)
    pos = {id(t): i for i, t in enumerate(g.nodes)}
    for t in g.nodes:
        for p in t.node.parents:
            if p.node is not None:
                assert pos[id(p)] < pos[id(t)]
    assert len({id(t) for t in g.nodes}) == len(g) == 5


def test_shared_subexpression_accumulates():
    x = leaf([2.0])
    y = x * x
    backward((y + y).sum())
    assert_allclose(x.grad, [8.0])


def test_no_grad_records_nothing():
    x = leaf([1.0])
    with T.no_grad():
        y = x * 3.0
    assert y.node is None and not y.requires_grad


# -- finite differences per op -------------------------------------------------------

def _unary_cases(rng):
    mask = rng.random((3, 4)) < 0.7
    mask[:, 0] = True
    return {
        "exp": lambda a: T.exp(a).sum(),
        "log": lambda a: T.log(T.exp(a) + 1.0).sum(),
        "relu": lambda a: (T.relu(a) * T.relu(a)).sum(),
        "mean": lambda a: (T.mean(a, axis=1) * T.mean(a, axis=1)).sum(),
        "transpose": lambda a: (T.transpose(a, (1, 0)) * np.arange(12.0).reshape(4, 3)).sum(),
        "reshape": lambda a: (a.reshape(2, 6) * np.arange(12.0).reshape(2, 6)).sum(),
        "softmax": lambda a: (T.softmax(a, mask=mask) * np.arange(12.0).reshape(3, 4)).sum(),
        "log_softmax": lambda a: (T.log_softmax(a, mask=mask) * np.arange(12.0).reshape(3, 4)).sum(),
        "l2_normalize": lambda a: (T.l2_normalize(a) * np.arange(12.0).reshape(3, 4)).sum(),
        "max": lambda a: (T.tmax(a, axis=1, mask=mask) * np.arange(3.0)).sum(),
        "pick": lambda a: (T.pick(a, np.array([0, 3, 1])) * np.array([1.0, -2.0, 3.0])).sum(),
        "cross_entropy": lambda a: T.cross_entropy(a, np.array([0, 2, 3]), mask=mask | (np.arange(4) >= 2)),
    }


@pytest.mark.parametrize("name", ["exp", "log", "relu", "mean", "transpose", "reshape", "softmax",
                                  "log_softmax", "l2_normalize", "max", "pick", "cross_entropy"])
def test_unary_ops_finite_differences(name):
    for i in range(50):
        rng = np.random.default_rng(100 + i)
        a = leaf(rng.normal(size=(3, 4)))
        fn = _unary_cases(rng)[name]
        assert check_grads(lambda: fn(a), [a]) < 1e-4


@pytest.mark.parametrize("op", ["add", "sub", "mul", "div", "matmul", "einsum", "conv1d"])
def test_binary_ops_finite_differences(op):
    for i in range(50):
        rng = np.random.default_rng(200 + i)
        if op == "matmul":
            a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
            fn = lambda: (T.matmul(a, b) * np.arange(6.0).reshape(3, 2)).sum()
        elif op == "einsum":
            a, b = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(4, 5)))
            fn = lambda: (T.einsum("bij,jk->bik", a, b) * np.arange(15.0).reshape(3, 5)).sum()
        elif op == "conv1d":
            a, b = leaf(rng.normal(size=(5, 3))), leaf(rng.normal(size=(3, 3, 2)))
            bias = leaf(rng.normal(size=2))
            fn = lambda: (T.conv1d(a, b, bias) * np.arange(10.0).reshape(5, 2)).sum()
            assert check_grads(fn, [a, b, bias]) < 1e-4
            continue
        else:
            a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(1, 4)))
            if op == "div":
                b.data = np.abs(b.data) + 0.5
            f = getattr(T, op)
            fn = lambda: (f(a, b) * np.arange(12.0).reshape(3, 4)).sum()
        assert check_grads(fn, [a, b]) < 1e-4


# -- sgd_step / ParamStore -------------------------------------------------------------

def test_sgd_zero_lr_is_identity():
    s = ParamStore()
    s.add("w", [1.0, 2.0])
    before = s.copy()
    s["w"].grad = np.array([5.0, -3.0])
    sgd_step(s, 0.0)
    assert s.equal(before)
    assert s["w"].grad is None


def test_sgd_scalar_arithmetic():
    s = ParamStore()
    s.add("p", 1.0)
    s["p"].grad = np.array(2.0)
    sgd_step(s, 0.5)
    assert s["p"].data == 0.0


def test_sgd_missing_grad_names_param():
    s = ParamStore()
    s.add("qacnn.fc2.weight", [1.0])
    with pytest.raises(ContractError, match="qacnn.fc2.weight"):
        sgd_step(s, 0.1)


def test_sgd_negative_lr_rejected():
    s = ParamStore()
    with pytest.raises(DomainError):
        sgd_step(s, -0.1)


def test_frozen_param_untouched_over_many_steps():
    rng = np.random.default_rng(7)
    s = ParamStore()
    s.add("qacnn.embed", rng.normal(size=(6, 3)), frozen=True)
    s.add("qacnn.fc2.weight", rng.normal(size=(3, 1)))
    embed0 = s["qacnn.embed"].data.copy()
    for _ in range(100):
        ids = rng.integers(0, 6, size=4)
        loss = T.matmul(T.embed_lookup(s["qacnn.embed"], ids), s["qacnn.fc2.weight"]).sum()
        backward(loss)
        assert s["qacnn.embed"].grad is None
        sgd_step(s, 0.05)
    assert_array_equal(s["qacnn.embed"].data, embed0)


def test_param_store_order_and_uniqueness():
    s = ParamStore()
    for n in ["b.x", "a.z", "a.y"]:
        s.add(n, [0.0])
    assert list(s) == ["a.y", "a.z", "b.x"]
    with pytest.raises(ContractError):
        s.add("a.y", [1.0])
    assert s.match("a.*") == ["a.y", "a.z"]


def test_same_seed_same_params_after_steps():
    def run(seed):
        rng = stream(seed, "test/init")
        s = ParamStore()
        s.add("w", rng.normal(size=(4, 2)))
        data = stream(seed, "test/data")
        for _ in range(10):
            x = Tensor(data.normal(size=(3, 4)))
            backward(T.cross_entropy(T.matmul(x, s["w"]), data.integers(0, 2, size=3)))
            sgd_step(s, 0.1)
        return s
    assert run(3).equal(run(3))
    assert not run(3).equal(run(4))


def test_named_streams_are_independent():
    a1 = stream(0, "alpha").normal(size=5)
    stream(0, "beta").normal(size=100)
    assert_array_equal(stream(0, "alpha").normal(size=5), a1)
    assert not np.array_equal(stream(0, "beta").normal(size=5), a1)
