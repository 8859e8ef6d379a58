import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowdetect.errors import DimensionError, NonFiniteError
from flowdetect.tensor import Rng, elementwise, fan_in_bound, init_uniform, matmul

from helpers import PyXoshiro


def test_matmul_identity():
    out = matmul([[1.0, 0.0], [0.0, 1.0]], [[3.0], [4.0]])
    np.testing.assert_array_equal(out, [[3.0], [4.0]])


def test_matmul_two_by_two():
    out = matmul([[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal(out, [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_zero():
    np.testing.assert_array_equal(matmul([[2.0]], [[0.0]]), [[0.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_matmul_left_to_right_accumulation():
    # 1e16 + 1 - 1e16 evaluated left to right gives 0, not 1
    a = np.array([[1e16, 1.0, -1e16]])
    b = np.ones((3, 1))
    assert matmul(a, b)[0, 0] == 0.0


def test_matmul_rows_independent_of_batch():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(37, 23))
    b = rng.normal(size=(23, 11))
    full = matmul(a, b)
    for i in (0, 5, 36):
        assert matmul(a[i:i + 1], b).tobytes() == full[i:i + 1].tobytes()


def test_matmul_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        matmul([[np.inf]], [[0.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_matmul_associative(m, k, p, q, seed):
    rng = np.random.default_rng(seed)
    A, B, C = rng.normal(size=(m, k)), rng.normal(size=(k, p)), rng.normal(size=(p, q))
    np.testing.assert_allclose(matmul(matmul(A, B), C), matmul(A, matmul(B, C)), atol=1e-9, rtol=0)


def test_elementwise_examples():
    assert elementwise("sigmoid", 0.0) == 0.5
    assert elementwise("tanh", 0.0) == 0.0
    assert elementwise("relu", -3.2) == 0.0
    assert elementwise("relu", 3.2) == 3.2
    np.testing.assert_array_equal(elementwise("add", [1.0, 2.0], [3.0, 4.0]), [4.0, 6.0])
    np.testing.assert_array_equal(elementwise("mul", [1.0, 2.0], [3.0, 4.0]), [3.0, 8.0])


def test_elementwise_shape_mismatch():
    with pytest.raises(DimensionError):
        elementwise("sub", np.ones(3), np.ones(2))


@given(st.floats(-20, 20))
def test_sigmoid_symmetry(x):
    assert abs(elementwise("sigmoid", x) + elementwise("sigmoid", -x) - 1.0) <= 1e-12


def test_sigmoid_extremes_stay_finite():
    out = elementwise("sigmoid", np.array([-1000.0, 1000.0]))
    assert out[0] == 0.0 and out[1] == 1.0


def test_init_uniform_range_and_determinism():
    a = init_uniform(Rng(42), [2, 2], 0.1)
    b = init_uniform(Rng(42), [2, 2], 0.1)
    assert a.shape == (2, 2)
    assert np.all(np.abs(a) <= 0.1)
    assert a.tobytes() == b.tobytes()


def test_fan_in_bound():
    assert fan_in_bound(16) == 0.25


def test_rng_matches_reference_stream():
    for seed, stream in [(0, 0), (42, 0), (42, 3), (2**63 + 7, 1)]:
        ref = PyXoshiro(seed, stream)
        got = Rng(seed, stream).next_u64(50)
        assert [int(v) for v in got] == [ref.next() for _ in range(50)]


def test_rng_doubles_and_permutation_match_reference():
    ref = PyXoshiro(7)
    rng = Rng(7)
    assert rng.random(20).tolist() == [ref.double() for _ in range(20)]
    assert rng.permutation(31).tolist() == ref.permutation(31)
    assert rng.integers(1000) == ref.bounded(1000)


def test_rng_streams_differ():
    assert Rng(1, 0).next_u64(4).tolist() != Rng(1, 1).next_u64(4).tolist()


def test_rng_random_range():
    x = Rng(3).random(10_000)
    assert x.min() >= 0.0 and x.max() < 1.0
    assert abs(x.mean() - 0.5) < 0.02
