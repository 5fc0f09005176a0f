import numpy as np
import pytest

from losslab import linalg
from losslab.errors import DimensionError, NumericError
from losslab.rng import Rng


def rand_mat(rng, r, c):
    return rng.normals(r * c).reshape(r, c)


def test_matmul_identity():
    rng = Rng(1)
    a = rand_mat(rng, 3, 3)
    assert np.array_equal(linalg.matmul(np.eye(3), a), a)


def test_matmul_shape_error():
    with pytest.raises(DimensionError):
        linalg.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_trace_definition():
    assert linalg.trace(np.array([[2.0, 1.0], [0.0, 3.0]])) == 5.0
    with pytest.raises(DimensionError):
        linalg.trace(np.zeros((2, 3)))


def test_frobenius_345():
    assert linalg.frobenius_norm(np.array([[3.0, 4.0]])) == 5.0


def test_add_and_scale():
    a = np.array([[1.0, 2.0]])
    b = np.array([[3.0, -1.0]])
    assert np.array_equal(linalg.add(a, b), np.array([[4.0, 1.0]]))
    assert np.array_equal(linalg.scale(a, 2.0), np.array([[2.0, 4.0]]))
    with pytest.raises(DimensionError):
        linalg.add(a, np.zeros((2, 2)))


def test_transpose():
    a = np.arange(6, dtype=np.float64).reshape(2, 3)
    assert np.array_equal(linalg.transpose(a), a.T)


def test_nonfinite_rejected():
    bad = np.array([[1.0, np.inf]])
    with pytest.raises(NumericError):
        linalg.add(bad, bad)


def test_matmul_associativity_property():
    rng = Rng(6)
    for trial in range(10):
        a = rand_mat(rng, 16, 16)
        b = rand_mat(rng, 16, 16)
        c = rand_mat(rng, 16, 16)
        left = linalg.matmul(linalg.matmul(a, b), c)
        right = linalg.matmul(a, linalg.matmul(b, c))
        denom = linalg.frobenius_norm(left)
        assert linalg.frobenius_norm(left - right) / denom < 1e-12


def test_trace_cyclic_property():
    rng = Rng(7)
    for trial in range(10):
        a = rand_mat(rng, 12, 9)
        b = rand_mat(rng, 9, 12)
        tab = linalg.trace(linalg.matmul(a, b))
        tba = linalg.trace(linalg.matmul(b, a))
        assert abs(tab - tba) / max(abs(tab), 1e-30) < 1e-12
