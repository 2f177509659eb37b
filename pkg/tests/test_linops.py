import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, strategies as st

from evoctrl.checks import random_spd, random_system
from evoctrl.linops import (DescriptorSystem, SPDError, SPDSolver, TerminalWeight, adjoint_system,
                            block_diag, check_symmetric, dense, read_mtx, solve_spd, sym_sqrt,
                            weighted_adjoint_defect, write_mtx)


def test_solve_spd_identity_and_diagonal():
    b = np.array([3.0, -1.0])
    assert np.array_equal(solve_spd(np.eye(2), b), b)
    assert np.allclose(solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 8.0])), [1.0, 2.0],
                       rtol=0, atol=1e-15)


def test_solve_spd_against_ldl_oracle(rng):
    A = random_spd(rng, 10)
    b = rng.standard_normal(10)
    lu, d, perm = scipy.linalg.ldl(A)
    z = scipy.linalg.solve_triangular(lu[perm], b[perm], lower=True)
    z = np.linalg.solve(d, z)
    x_ref = np.empty(10)
    x_ref[perm] = scipy.linalg.solve_triangular(lu[perm].T, z, lower=False)
    assert np.max(np.abs(solve_spd(A, b) - x_ref)) <= 1e-10


def test_sparse_solver_matches_dense(rng):
    A = random_spd(rng, 8)
    b = rng.standard_normal((8, 3))
    assert np.allclose(SPDSolver(sp.csr_matrix(A)).solve(b), np.linalg.solve(A, b), atol=1e-12)


def test_not_spd_rejected():
    with pytest.raises(SPDError):
        solve_spd(np.diag([1.0, -1.0]), np.ones(2))
    with pytest.raises(SPDError):
        check_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_shape_mismatch_names_offender():
    with pytest.raises(ValueError, match="C has shape"):
        DescriptorSystem(np.eye(2), np.eye(2), np.ones((2, 1)), np.ones((1, 3)), np.zeros((1, 1)))


def test_self_adjoint_case_unchanged(rng):
    S = rng.standard_normal((3, 3))
    A = S + S.T
    B = rng.standard_normal((3, 2))
    D0 = rng.standard_normal((2, 2))
    sys = DescriptorSystem(np.eye(3), A, B, B.T, D0 + D0.T)
    adj = adjoint_system(sys)
    for name in "ABCD":
        assert np.allclose(dense(getattr(adj, name)), dense(getattr(sys, name)), atol=1e-15)


def test_identity_weights_give_plain_transposes(rng):
    sys = DescriptorSystem(np.eye(3), *(rng.standard_normal(s) for s in ((3, 3), (3, 2), (2, 3),
                                                                            (2, 2))))
    adj = adjoint_system(sys)
    assert np.array_equal(adj.A, sys.A.T)
    assert np.allclose(adj.B, sys.C.T, atol=1e-15)
    assert np.allclose(adj.C, sys.B.T, atol=1e-15)
    assert np.allclose(adj.D, sys.D.T, atol=1e-15)


def test_adjoint_is_involution(rng):
    sys = random_system(rng, 5, 2, 3)
    back = adjoint_system(adjoint_system(sys.replace()))
    for name in ("M", "A", "B", "C", "D", "Wu", "Wy"):
        assert np.max(np.abs(dense(getattr(back, name)) - dense(getattr(sys, name)))) <= 1e-14


@given(st.integers(0, 2**32 - 1))
def test_weighted_adjoint_identity(seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, 4, 2, 3)
    x, u, mu, yd = (rng.standard_normal(k) for k in (4, 2, 4, 3))
    scale = 1.0 + np.abs(x).sum() * np.abs(mu).sum() + np.abs(u).sum() * np.abs(yd).sum()
    assert weighted_adjoint_defect(sys, x, u, mu, yd) <= 1e-12 * scale * 10


def test_sym_sqrt_squares_back(rng):
    A = random_spd(rng, 6)
    R = sym_sqrt(A)
    assert np.allclose(R, R.T, atol=1e-14)
    assert np.allclose(R @ R, A, atol=1e-12)


def test_terminal_weight_value_and_dual(rng):
    F = rng.standard_normal((2, 4))
    W = random_spd(rng, 2)
    t = TerminalWeight(F, rng.standard_normal(2), 3.0, W)
    x, dx = rng.standard_normal(4), rng.standard_normal(4)
    h = 1e-6
    fd = (t.value(x + h * dx) - t.value(x - h * dx)) / (2 * h)
    assert abs(fd - t.dual(x) @ dx) <= 1e-7 * max(1.0, abs(fd))
    assert TerminalWeight.none(4).value(x) == 0.0


def test_terminal_stack_adds_values(rng):
    a = TerminalWeight(rng.standard_normal((2, 3)), rng.standard_normal(2), 2.0)
    b = TerminalWeight(rng.standard_normal((1, 3)), rng.standard_normal(1), 0.5, np.eye(1) * 3)
    x = rng.standard_normal(3)
    assert np.isclose(a.stack(b).value(x), a.value(x) + b.value(x), rtol=1e-14)


def test_save_load_roundtrip(tmp_path, rng):
    sys = random_system(rng, 3, 1, 2).replace(M=sp.csr_matrix(random_spd(rng, 3)))
    sys.save(tmp_path)
    back = DescriptorSystem.load(tmp_path)
    for name in ("M", "A", "B", "C", "D", "Wu", "Wy"):
        assert np.array_equal(dense(getattr(back, name)), dense(getattr(sys, name)))


def test_mtx_roundtrip_full_precision(tmp_path, rng):
    X = rng.standard_normal((3, 4)) * 1e-7
    write_mtx(tmp_path / "x.mtx", X)
    assert np.array_equal(dense(read_mtx(tmp_path / "x.mtx")), X)


def test_block_diag_mixed():
    B = block_diag(np.eye(2), 3 * np.eye(1))
    assert np.array_equal(dense(B), np.diag([1.0, 1.0, 3.0]))
