import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsrm.exceptions import InvalidInput, NotPositiveDefinite, RankDeficient
from rsrm.linalg import qr_unique, spd_check, sym, sym_eig, sym_mat_fn, sym_mat_fns

from conftest import random_spd


def test_sym_eig_diagonal():
    w, v = sym_eig(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(w, [1.0, 3.0])
    np.testing.assert_allclose(np.abs(v), [[0, 1], [1, 0]], atol=1e-15)


def test_sym_eig_swap_matrix():
    w, v = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(w, [-1.0, 1.0], atol=1e-15)
    s = 1 / np.sqrt(2)
    for k, ref in enumerate(([s, -s], [s, s])):
        assert abs(abs(v[:, k] @ ref) - 1.0) < 1e-12


def test_sym_eig_reconstruction(rng):
    a = sym(rng.standard_normal((5, 5)))
    w, v = sym_eig(a)
    assert np.linalg.norm((v * w) @ v.T - a) < 1e-10


@pytest.mark.parametrize("d", [1, 7, 40, 100])
def test_sym_eig_orthonormal(rng, d):
    _, v = sym_eig(sym(rng.standard_normal((d, d))))
    assert np.linalg.norm(v.T @ v - np.eye(d)) < 1e-10


def test_sym_eig_rejects_bad_input():
    with pytest.raises(InvalidInput):
        sym_eig(np.ones((2, 3)))
    with pytest.raises(InvalidInput):
        sym_eig(np.array([[np.nan, 0], [0, 1.0]]))


def test_qr_diagonal():
    q, r = qr_unique(np.diag([2.0, 3.0]))
    np.testing.assert_array_equal(q, np.eye(2))
    np.testing.assert_array_equal(r, np.diag([2.0, 3.0]))


@pytest.mark.parametrize("t", [0.0, 0.3, -2.0, 1e3])
def test_qr_single_column(t):
    q, r = qr_unique(np.array([[1.0], [t]]))
    s = np.sqrt(1 + t * t)
    np.testing.assert_allclose(q[:, 0], [1 / s, t / s], rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(r, [[s]], rtol=1e-14)


def test_qr_unit_second_axis():
    q, r = qr_unique(np.array([[0.0], [1.0]]))
    np.testing.assert_allclose(q, [[0.0], [1.0]], atol=1e-15)
    np.testing.assert_allclose(r, [[1.0]])


def test_qr_negative_column_flips_sign():
    q, r = qr_unique(np.array([[-2.0], [0.0]]))
    np.testing.assert_allclose(q, [[-1.0], [0.0]])
    np.testing.assert_allclose(r, [[2.0]])


def test_qr_rank_deficient():
    with pytest.raises(RankDeficient):
        qr_unique(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))
    with pytest.raises(InvalidInput):
        qr_unique(np.ones((2, 3)))


@given(st.integers(1, 6), st.integers(0, 5), st.integers(0, 2**31 - 1))
def test_qr_properties(r, extra, seed):
    a = np.random.default_rng(seed).standard_normal((r + extra, r))
    q, rr = qr_unique(a)
    assert np.all(np.diag(rr) > 0)
    assert np.allclose(np.triu(rr), rr)
    assert np.linalg.norm(q.T @ q - np.eye(r)) < 1e-12
    assert np.linalg.norm(q @ rr - a) < 1e-12 * max(1, np.linalg.norm(a))
    q2, r2 = qr_unique(a.copy())
    assert np.array_equal(q, q2) and np.array_equal(rr, r2)


def test_matrix_functions_basic():
    np.testing.assert_allclose(sym_mat_fn(np.zeros((3, 3)), "exp"), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(sym_mat_fn(np.eye(3), "log"), np.zeros((3, 3)), atol=1e-15)
    np.testing.assert_allclose(sym_mat_fn(np.diag([4.0, 9.0]), "sqrt"), np.diag([2.0, 3.0]), atol=1e-14)


def test_matrix_functions_stack(rng):
    a = np.stack([random_spd(rng, 4) for _ in range(3)])
    logs = sym_mat_fn(a, "log")
    for k in range(3):
        np.testing.assert_allclose(logs[k], sym_mat_fn(a[k], "log"), atol=1e-13)
    np.testing.assert_allclose(sym_mat_fn(logs, "exp"), a, rtol=1e-11, atol=1e-12)


def test_matrix_functions_reject_indefinite():
    with pytest.raises(NotPositiveDefinite):
        sym_mat_fn(np.diag([1.0, -1.0]), "log")
    with pytest.raises(InvalidInput):
        sym_mat_fn(np.eye(2), "cbrt")
    # exp is defined everywhere
    sym_mat_fn(np.diag([1.0, -1.0]), "exp")


@given(st.integers(1, 8), st.floats(1.0, 1e6), st.integers(0, 2**31 - 1))
def test_inv_sqrt_is_inverse_of_sqrt(d, cond, seed):
    a = random_spd(np.random.default_rng(seed), d, cond)
    s, isq = sym_mat_fns(a, "sqrt", "inv_sqrt")
    ref = np.linalg.inv(s)
    assert np.linalg.norm(isq - ref) <= 1e-8 * np.linalg.norm(ref)
    assert np.linalg.norm(s @ s - a) <= 1e-8 * np.linalg.norm(a)


def test_spd_check():
    assert spd_check(np.eye(2))
    assert not spd_check(np.diag([1.0, 0.0]))
    assert not spd_check(np.array([[1.0, 0.5], [0.0, 1.0]]))
    assert not spd_check(np.array([[np.inf, 0], [0, 1.0]]))
