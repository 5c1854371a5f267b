import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conftest import random_system
from mmgtop.coarse_space import build_hierarchy_operators, build_mmg
from mmgtop.errors import ConfigurationError, SolverError
from mmgtop.grid import build_hierarchy
from mmgtop.solver import SmootherState, make_preconditioner, pcg, three_grid_apply


def as_matrix(fn, n):
    return np.column_stack([fn(e) for e in np.eye(n)])


def test_zero_residual_maps_to_zero():
    s, _, _ = random_system(4, 4, seed=1)
    h = build_mmg(s, build_hierarchy(s.spec, 1, 2), 2, 4)
    assert np.array_equal(h.apply(np.zeros(64)), np.zeros(64))
    with pytest.raises(ValueError):
        h.apply(np.zeros(63))


def test_identity_hierarchy_is_a_direct_solve():
    s, _, _ = random_system(3, 6, seed=2)
    n = s.A.shape[0]
    eye = sp.identity(n, format="csr")
    h = build_hierarchy_operators(s.A, eye, eye, [np.arange(n)], [np.arange(n)], nu=0)
    r = np.random.default_rng(0).standard_normal(n)
    exact = np.linalg.solve(s.A.toarray(), r)
    assert np.allclose(three_grid_apply(h, r), exact, rtol=1e-12, atol=0)


@pytest.mark.parametrize("nu", [1, 2])
def test_cycle_is_symmetric_positive(nu):
    s, _, _ = random_system(4, 5, seed=3)
    h = build_mmg(s, build_hierarchy(s.spec, 1, 2), 2, 4, nu=nu)
    M = as_matrix(h.apply, 64)
    assert np.abs(M - M.T).max() <= 1e-12 * np.abs(M).max()
    assert np.linalg.eigvalsh((M + M.T) / 2).min() > 0


def test_block_jacobi_exact_on_block_diagonal():
    rng = np.random.default_rng(4)
    blocks = [np.arange(0, 3), np.arange(3, 7)]
    B = [rng.standard_normal((k.size, k.size)) for k in blocks]
    A = sp.block_diag([b @ b.T + np.eye(len(b)) for b in B], format="csr")
    s = SmootherState(A, blocks)
    r = rng.standard_normal(7)
    assert np.allclose(s.apply(r), np.linalg.solve(A.toarray(), r), rtol=1e-12)


def test_block_jacobi_chain_by_hand():
    # 1-D chain, 8 cells, two blocks of 4; one sweep ignores the coupling
    A = sp.diags([-np.ones(7), 2 * np.ones(8), -np.ones(7)], [-1, 0, 1], format="csr")
    A[0, 0] = A[7, 7] = 3.0
    s = SmootherState(A, [np.arange(4), np.arange(4, 8)])
    r = np.arange(1.0, 9.0)
    D = A.toarray()
    D[3, 4] = D[4, 3] = 0.0
    assert np.allclose(s.apply(r), np.linalg.solve(D, r), rtol=1e-13)
    s2 = SmootherState(A, [np.arange(4), np.arange(4, 8)], nu=2)
    z1 = np.linalg.solve(D, r)
    assert np.allclose(s2.apply(r), z1 + np.linalg.solve(D, r - A @ z1), rtol=1e-13)


def test_smoother_rejects_bad_partition():
    A = sp.identity(4, format="csr")
    with pytest.raises(ConfigurationError):
        SmootherState(A, [np.arange(3)])
    with pytest.raises(ConfigurationError):
        SmootherState(A, [np.arange(3), np.arange(2, 4)])


def test_pcg_zero_rhs():
    x, rep = pcg(sp.identity(5, format="csr"), np.zeros(5))
    assert rep.iterations == 0 and rep.converged and not x.any()


def test_pcg_jacobi_on_diagonal_is_one_step():
    A = sp.diags(np.arange(1.0, 11.0), format="csr")
    b = np.ones(10)
    pc = make_preconditioner("jacobi", type("S", (), {"A": A})(), None)
    x, rep = pcg(A, b, pc, rtol=1e-12)
    assert rep.iterations == 1
    assert np.allclose(x, 1 / np.arange(1.0, 11.0))


def test_pcg_plain_cg_matches_direct():
    s, _, _ = random_system(4, 6, seed=5)
    x, rep = pcg(s.A, s.rhs, None, rtol=1e-10)
    assert rep.converged
    exact = np.linalg.solve(s.A.toarray(), s.rhs)
    assert np.linalg.norm(x - exact) <= 1e-7 * np.linalg.norm(exact)
    assert rep.history[0] == 1.0 and rep.history[-1] <= 1e-10


def test_pcg_reports_maxit():
    s, _, _ = random_system(4, 6, seed=5)
    _, rep = pcg(s.A, s.rhs, None, rtol=1e-14, maxit=3)
    assert not rep.converged and rep.iterations == 3 and rep.status == "maxit"


def test_pcg_indefinite_breaks_down():
    A = sp.diags([1.0, -1.0], format="csr")
    with pytest.raises(SolverError):
        pcg(A, np.array([1.0, 1.0]))


@pytest.mark.parametrize("kind", ["none", "jacobi", "block_jacobi", "two_grid", "mmg"])
def test_every_preconditioner_solves(kind):
    s, _, _ = random_system(8, 4, seed=6, kappa_lo=0.01)
    hg = build_hierarchy(s.spec, 2, 2)
    pc = make_preconditioner(kind, s, hg, lc=3, lcc=8)
    x, rep = pcg(s.A, s.rhs, pc, rtol=1e-9)
    assert rep.converged
    exact = np.linalg.solve(s.A.toarray(), s.rhs)
    assert np.linalg.norm(x - exact) <= 1e-6 * np.linalg.norm(exact)


def test_unknown_preconditioner():
    s, _, _ = random_system(4, 1, seed=0)
    with pytest.raises(ConfigurationError):
        make_preconditioner("ilu", s, build_hierarchy(s.spec, 1, 2))


def test_full_coarse_coarse_space_equals_two_level():
    s, _, _ = random_system(8, 5, seed=7)
    hg = build_hierarchy(s.spec, 2, 2)
    lc = 3
    full = make_preconditioner("mmg", s, hg, lc=lc, lcc=8 * lc)
    two = make_preconditioner("two_grid", s, hg, lc=lc)
    r = np.random.default_rng(1).standard_normal(s.A.shape[0])
    a, b = full(r), two(r)
    assert np.linalg.norm(a - b) <= 1e-9 * np.linalg.norm(b)


def test_error_contraction_in_energy_norm():
    s, _, _ = random_system(16, 4, seed=8, kappa_lo=0.01)
    h = build_mmg(s, build_hierarchy(s.spec, 2, 4), 4, 17)
    rng = np.random.default_rng(2)
    for _ in range(5):
        e = rng.standard_normal(s.A.shape[0])
        e1 = e - h.apply(s.A @ e)
        assert e1 @ (s.A @ e1) < e @ (s.A @ e)


def test_deterministic_and_thread_invariant():
    s, _, _ = random_system(8, 6, seed=9)
    hg = build_hierarchy(s.spec, 2, 2)
    r = np.random.default_rng(3).standard_normal(s.A.shape[0])
    a = build_mmg(s, hg, 3, 6).apply(r)
    b = build_mmg(s, hg, 3, 6).apply(r)
    c = build_mmg(s, hg, 3, 6, threads=3).apply(r)
    assert np.array_equal(a, b) and np.array_equal(a, c)


@settings(max_examples=10)
@given(seed=st.integers(0, 10_000), cr=st.sampled_from([1, 3, 6]))
def test_cycle_symmetry_property(seed, cr):
    s, _, _ = random_system(4, cr, seed=seed, binary=True)
    h = build_mmg(s, build_hierarchy(s.spec, 1, 2), 2, 5)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 64))
    Mu, Mv = h.apply(u), h.apply(v)
    assert abs(v @ Mu - u @ Mv) <= 1e-10 * np.linalg.norm(Mu) * np.linalg.norm(v) + 1e-300
    assert u @ Mu > 0
