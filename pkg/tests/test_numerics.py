import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import TOL, cases, check
from leofl import numerics as nx


def test_softened_softmax_examples():
    assert np.allclose(nx.softened_softmax(np.full(5, 3.0), 2.0).data, 0.2)
    p = nx.softened_softmax(np.array([0.5, -1.0, 2.0]), 1e6).data
    assert np.all(np.abs(p - 1 / 3) < 1e-6)
    with pytest.raises(ValueError):
        nx.softened_softmax(np.ones(3), 0.0)


def test_softmax_is_overflow_safe():
    p = nx.softmax(nx.Tensor([[1000.0, 0.0]])).data
    assert np.allclose(p, [[1.0, 0.0]])


def test_cross_entropy_examples():
    assert float(nx.cross_entropy(np.array([1.0, 0.0]), np.array([1.0, 0.0])).data) == pytest.approx(0.0)
    assert float(nx.cross_entropy(np.full(4, 0.25), np.eye(4)[2]).data) == pytest.approx(math.log(4))
    assert float(nx.cross_entropy(np.array([0.7, 0.3]), np.array([1.0, 0.0])).data) == pytest.approx(0.35667, abs=1e-5)
    # zero mass on the true class is clamped rather than infinite
    assert math.isfinite(float(nx.cross_entropy(np.array([0.0, 1.0]), np.array([1.0, 0.0])).data))


def test_kl_examples():
    q = np.array([0.2, 0.5, 0.3])
    assert float(nx.kl_divergence(q, q).data) == pytest.approx(0.0, abs=1e-15)
    assert float(nx.kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5])).data) == pytest.approx(math.log(2))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 8))
def test_kl_nonnegative(seed, c):
    r = np.random.default_rng(seed)
    a, b = r.dirichlet(np.ones(c)), r.dirichlet(np.ones(c))
    assert float(nx.kl_divergence(a, b).data) >= -1e-15


def test_backward_examples():
    w = nx.parameter(np.array([1.0, -2.0, 3.0]))
    (w * 0.0 + 5.0).sum().backward()
    assert np.all(w.grad == 0.0)
    w.grad = None
    ((w * w).sum() * 0.5).backward()
    assert np.allclose(w.grad, w.data)
    with pytest.raises(ValueError):
        w.backward()


def test_shared_subexpression_accumulates():
    x = nx.parameter(np.array([2.0]))
    y = x * x
    (y + y).sum().backward()
    assert x.grad[0] == pytest.approx(8.0)


@pytest.mark.parametrize("name", sorted(cases(0)))
def test_gradient_matches_finite_differences(name):
    build, params = cases(0)[name]
    assert check(build, params) <= TOL


def test_non_finite_is_rejected():
    with pytest.raises(nx.NonFiniteError):
        nx.Tensor([np.inf])
    a = nx.parameter(np.array([1.0]))
    with np.errstate(divide="ignore"), pytest.raises(nx.NonFiniteError):
        a / nx.Tensor([0.0])


def test_matmul_shape_checks():
    with pytest.raises(ValueError):
        nx.parameter(np.ones((2, 3))) @ nx.parameter(np.ones((2, 3)))


def test_parameter_file_roundtrip(tmp_path):
    named = [("a", np.arange(6.0).reshape(2, 3)), ("b", np.array([1.5]))]
    nx.save_parameters(tmp_path / "p.bin", named)
    back = nx.load_parameters(tmp_path / "p.bin")
    assert [n for n, _ in back] == ["a", "b"]
    assert all(np.array_equal(x, y) for (_, x), (_, y) in zip(named, back))
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        nx.load_parameters(tmp_path / "bad.bin")


def test_flatten_roundtrip():
    ps = [nx.parameter(np.ones((2, 2))), nx.parameter(np.zeros(3))]
    vec = np.arange(7.0)
    nx.unflatten_into(ps, vec)
    assert np.array_equal(nx.flatten(ps), vec)
    with pytest.raises(ValueError):
        nx.unflatten_into(ps, np.zeros(5))
