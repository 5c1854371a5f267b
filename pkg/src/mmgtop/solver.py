"""Block-Jacobi smoothers, the three-grid preconditioner cycle, and PCG."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mmgtop.errors import ConfigurationError, SolverError

DENSE_LIMIT = 1500  # blocks up to this size are factorized densely


class Factorization:
    """Cholesky of a small SPD block, sparse LU otherwise."""

    def __init__(self, A):
        n = A.shape[0]
        self.n = n
        if n <= DENSE_LIMIT:
            dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
            try:
                self._cho = sla.cho_factor(dense, lower=True, check_finite=False)
            except sla.LinAlgError as exc:
                raise SolverError(f"block of size {n} is not positive definite: {exc}") from exc
            self._lu = None
        else:
            self._cho = None
            try:
                self._lu = spla.splu(sp.csc_matrix(A))
            except RuntimeError as exc:
                raise SolverError(f"sparse factorization of size {n} failed: {exc}") from exc

    def solve(self, b):
        if self._cho is not None:
            return sla.cho_solve(self._cho, b, check_finite=False)
        return self._lu.solve(b)


@dataclass
class SmootherState:
    """Block-Jacobi smoother: ``nu`` sweeps of z <- z + D_B^{-1} (r - A z) from z = 0."""

    A: sp.csr_matrix
    blocks: list[np.ndarray]
    nu: int = 1
    level: str = "fine"
    threads: int = 1
    factors: list[Factorization] = field(init=False, repr=False)

    def __post_init__(self):
        n = self.A.shape[0]
        seen = np.concatenate(self.blocks) if self.blocks else np.zeros(0, dtype=int)
        if seen.size != n or np.unique(seen).size != n:
            raise ConfigurationError(f"smoother blocks do not partition {n} unknowns")
        A = self.A.tocsr()
        subs = [A[b][:, b] for b in self.blocks]
        self.factors = _map(Factorization, subs, self.threads)

    def block_solve(self, r):
        z = np.empty_like(r)

        def one(k):
            b = self.blocks[k]
            z[b] = self.factors[k].solve(r[b])

        _map(one, range(len(self.blocks)), self.threads)
        return z

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape != (self.A.shape[0],):
            raise ValueError("residual length does not match smoother")
        if self.nu == 0:
            return np.zeros_like(r)
        z = self.block_solve(r)
        for _ in range(self.nu - 1):
            z = z + self.block_solve(r - self.A @ z)
        return z

    # D_B is symmetric, so the transpose sweep is the same map
    apply_transpose = apply


def block_jacobi_apply(s: SmootherState, r):
    return s.apply(r)


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def three_grid_apply(h, r0):
    """One cycle of the three-grid method; returns y ~ A^{-1} r0.

    ``h`` is a :class:`mmgtop.coarse_space.MultiscaleHierarchy`.
    """
    r0 = np.asarray(r0, dtype=float)
    if r0.shape != (h.A.shape[0],):
        raise ValueError(f"residual of length {r0.size} for a hierarchy of size {h.A.shape[0]}")
    A, Ac = h.A, h.A_c
    r1 = h.smoother.apply(r0)
    rc = h.R_c @ (r0 - A @ r1)
    rc0 = h.smoother_c.apply(rc)
    rcc = h.R_cc @ (rc - Ac @ rc0)
    # Involve a direct solver on the coarse-coarse grid
    ecc = h.A_cc_factor.solve(rcc)
    rc1 = rc0 + h.R_cc.T @ ecc
    ec = rc1 + h.smoother_c.apply_transpose(rc - Ac @ rc1)
    r2 = r1 + h.R_c.T @ ec
    return r2 + h.smoother.apply_transpose(r0 - A @ r2)


@dataclass
class Preconditioner:
    """Symmetric preconditioner map r -> M r with a label and its set-up time."""

    kind: str
    apply: object
    setup_seconds: float = 0.0
    hierarchy: object = None

    def __call__(self, r):
        return self.apply(r)


def make_baseline_preconditioner(kind: str, A, *, hgrid=None, system=None, lc=4, nu=1, threads=1) -> Preconditioner:
    """``none``, ``jacobi``, ``block_jacobi`` or ``two_grid``.

    ``block_jacobi`` uses one block per coarse-coarse element of ``hgrid``;
    ``two_grid`` is the three-grid cycle with ``R_cc = I`` and needs ``system``.
    """
    t0 = time.perf_counter()
    A = sp.csr_matrix(A)
    if kind == "none":
        fn = lambda r: np.array(r, dtype=float)  # noqa: E731
    elif kind == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolverError("jacobi preconditioner needs a positive diagonal")
        inv = 1.0 / d
        fn = lambda r: inv * r  # noqa: E731
    elif kind == "block_jacobi":
        if hgrid is None:
            raise ConfigurationError("block_jacobi needs the grid hierarchy for its blocks")
        s = SmootherState(A, list(hgrid.cc_cells), nu=1, threads=threads)
        fn = s.apply
    elif kind == "two_grid":
        if hgrid is None or system is None:
            raise ConfigurationError("two_grid needs the grid hierarchy and the assembled system")
        from mmgtop.coarse_space import build_mmg

        h = build_mmg(system, hgrid, lc, None, nu=nu, threads=threads)
        pc = Preconditioner("two_grid", h.apply, time.perf_counter() - t0, h)
        return pc
    else:
        raise ConfigurationError(f"unknown preconditioner kind {kind!r}")
    return Preconditioner(kind, fn, time.perf_counter() - t0)


def make_preconditioner(kind: str, system, hgrid, *, lc=4, lcc=17, nu=1, threads=1) -> Preconditioner:
    """Any supported preconditioner, including the multiscale multigrid ``mmg``."""
    if kind == "mmg":
        from mmgtop.coarse_space import build_mmg

        t0 = time.perf_counter()
        h = build_mmg(system, hgrid, lc, lcc, nu=nu, threads=threads)
        return Preconditioner("mmg", h.apply, time.perf_counter() - t0, h)
    return make_baseline_preconditioner(kind, system.A, hgrid=hgrid, system=system, lc=lc, nu=nu, threads=threads)


@dataclass
class SolveReport:
    iterations: int
    history: list[float]
    converged: bool
    seconds: float
    preconditioner: str = ""
    setup_seconds: float = 0.0

    @property
    def status(self) -> str:
        return "converged" if self.converged else "maxit"


def pcg(A, b, precond=None, rtol=1e-6, maxit=10000, x0=None, tag=""):
    """Preconditioned conjugate gradients.

    Stops when ||b - A x|| / ||b|| <= rtol (recursively updated residual).
    Hitting ``maxit`` is reported through ``SolveReport.converged``; a
    nonpositive curvature p^T A p raises :class:`SolverError`.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.size
    if precond is None:
        precond = lambda r: r  # noqa: E731
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, [0.0], True, time.perf_counter() - t0, tag)
    r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    history = [res]
    if res <= rtol:
        return x, SolveReport(0, history, True, time.perf_counter() - t0, tag)
    z = precond(r)
    p = z.copy()
    rz = r @ z
    it = 0
    converged = False
    while it < maxit:
        Ap = A @ p
        pAp = p @ Ap
        if not pAp > 0:
            raise SolverError(f"nonpositive curvature p^T A p = {pAp:.3e} at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        history.append(res)
        if res <= rtol:
            converged = True
            break
        z = precond(r)
        rz_new = r @ z
        if not rz_new > 0:
            raise SolverError(f"preconditioner is not positive definite (r^T M r = {rz_new:.3e})")
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(it, history, converged, time.perf_counter() - t0, tag)
