"""Nested spectral coarse spaces and the multiscale hierarchy.

On every coarse element we solve the local generalized eigenproblem

    S_loc phi = lambda M_loc phi,

with ``S_loc`` the TPFA stiffness restricted to faces strictly inside the
element and ``M_loc = diag(kappa * cell volume)``. The eigenvectors of the
``L_c`` smallest eigenvalues, normalized so that ``phi^T M_loc phi = 1``,
become the rows of ``R_c``. On every coarse-coarse element the stiffness of
its interior faces is projected onto the span of its coarse rows; because
those rows are mass-orthonormal the projected mass is the identity and a
standard symmetric eigenproblem picks the ``L_cc`` rows of ``R_cc``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mmgtop.errors import ConfigurationError, SolverError
from mmgtop.fvm import face_transmissibility, interior_faces
from mmgtop.grid import GridSpec, HierarchicalGrid
from mmgtop.solver import Factorization, SmootherState, three_grid_apply

DENSE_EIG_LIMIT = 4096
CHUNK_BYTES = 64 * 2**20


@dataclass
class LocalSpectralBasis:
    element: int
    cells: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (L_c, cells) rows, mass-orthonormal


def _fix_signs(vecs):
    """Make the largest-magnitude entry of each row positive (rows along axis -2)."""
    k = np.argmax(np.abs(vecs), axis=-1)
    s = np.sign(np.take_along_axis(vecs, k[..., None], axis=-1))
    s[s == 0] = 1.0
    return vecs * s


def _block_faces(block_xyz, spacing):
    """Local interior faces of a box of cells: (left, right, area/h)."""
    local = GridSpec(*block_xyz, *(b * h for b, h in zip(block_xyz, spacing)))
    left, right, geom = [], [], []
    for a in range(3):
        lc, rc = interior_faces(local, a)
        left.append(lc)
        right.append(rc)
        geom.append(np.full(lc.size, local.face_area(a) / local.h[a]))
    return np.concatenate(left), np.concatenate(right), np.concatenate(geom)


def _local_stiffness_batch(kappa_loc, left, right, geom):
    """Dense element stiffness for a stack of elements, shape (m, n, n)."""
    m, n = kappa_loc.shape
    t = face_transmissibility(kappa_loc[:, left], kappa_loc[:, right]) * geom
    S = np.zeros((m, n, n))
    S[:, left, right] = -t
    S[:, right, left] = -t
    diag = np.zeros((m, n))
    np.add.at(diag, (slice(None), left), t)
    np.add.at(diag, (slice(None), right), t)
    S[:, np.arange(n), np.arange(n)] = diag
    return S


def _smallest_eigs_sparse(B, k):
    # shift-invert Lanczos just below the spectrum (B is PSD with a null space)
    scale = abs(B).sum(axis=1).max()
    vals, vecs = spla.eigsh(B, k=k, sigma=-1e-8 * scale, which="LM")
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def local_spectral_bases(hgrid: HierarchicalGrid, kappa, lc: int, elements=None):
    """Eigenpairs on many coarse elements at once.

    Returns ``(eigenvalues, eigenvectors)`` with shapes (m, lc) and
    (m, lc, cells_per_coarse); eigenvector rows are mass-orthonormal.
    """
    kappa = np.asarray(kappa, dtype=float)
    n = hgrid.cells_per_coarse
    if not 1 <= lc <= n:
        raise ConfigurationError(f"L_c={lc} must lie in [1, {n}] (cells per coarse element)")
    if np.any(kappa <= 0):
        raise SolverError("eigensolver breakdown: conductivity must be positive")
    elements = np.arange(hgrid.m_c) if elements is None else np.atleast_1d(elements)
    spec = hgrid.spec
    left, right, geom = _block_faces(hgrid.coarse_block, spec.h)
    vol = spec.cell_volume
    vals_out = np.empty((elements.size, lc))
    vecs_out = np.empty((elements.size, lc, n))
    if n > DENSE_EIG_LIMIT:
        for e_pos, e in enumerate(elements):
            cells = hgrid.coarse_cells[e]
            k = kappa[cells]
            t = face_transmissibility(k[left], k[right]) * geom
            S = sp.coo_matrix((np.concatenate([-t, -t]), (np.concatenate([left, right]), np.concatenate([right, left]))), shape=(n, n)).tocsr()
            diag = np.zeros(n)
            np.add.at(diag, left, t)
            np.add.at(diag, right, t)
            S = S + sp.diags(diag)
            dm = 1.0 / np.sqrt(k * vol)
            B = sp.diags(dm) @ S @ sp.diags(dm)
            w, v = _smallest_eigs_sparse(B, lc)
            vals_out[e_pos] = w
            vecs_out[e_pos] = _fix_signs((v * dm[:, None]).T)
        return vals_out, vecs_out
    chunk = max(1, CHUNK_BYTES // (8 * n * n))
    for start in range(0, elements.size, chunk):
        sel = elements[start:start + chunk]
        k = kappa[hgrid.coarse_cells[sel]]
        S = _local_stiffness_batch(k, left, right, geom)
        dm = 1.0 / np.sqrt(k * vol)
        B = S * dm[:, :, None] * dm[:, None, :]
        w, v = np.linalg.eigh(B)
        phi = v[:, :, :lc] * dm[:, :, None]
        vals_out[start:start + sel.size] = w[:, :lc]
        vecs_out[start:start + sel.size] = _fix_signs(np.swapaxes(phi, 1, 2))
    return vals_out, vecs_out


def local_spectral_basis(hgrid: HierarchicalGrid, kappa, element: int, lc: int) -> LocalSpectralBasis:
    if not 0 <= element < hgrid.m_c:
        raise IndexError(f"coarse element {element} out of range")
    vals, vecs = local_spectral_bases(hgrid, kappa, lc, elements=[element])
    return LocalSpectralBasis(element, hgrid.coarse_cells[element], vals[0], vecs[0])


def assemble_Rc(hgrid: HierarchicalGrid, eigenvectors) -> sp.csr_matrix:
    """Stack local eigenvectors into the n_c x M restriction.

    Row ``c * L_c + j`` holds eigenvector ``j`` of coarse element ``c``.
    """
    if isinstance(eigenvectors, (list, tuple)):
        if sorted(b.element for b in eigenvectors) != list(range(hgrid.m_c)):
            raise ConfigurationError("need exactly one basis per coarse element")
        eigenvectors = np.stack([b.eigenvectors for b in sorted(eigenvectors, key=lambda b: b.element)])
    eigenvectors = np.asarray(eigenvectors)
    m, lc, n = eigenvectors.shape
    if m != hgrid.m_c or n != hgrid.cells_per_coarse:
        raise ConfigurationError("eigenvector array does not match the coarse elements")
    rows = np.repeat(np.arange(m * lc), n)
    cols = np.repeat(hgrid.coarse_cells, lc, axis=0).ravel()
    R = sp.csr_matrix((eigenvectors.ravel(), (rows, cols)), shape=(m * lc, hgrid.spec.size))
    R.sort_indices()
    return R


def broken_stiffness(spec: GridSpec, kappa, owner) -> sp.csr_matrix:
    """TPFA stiffness keeping only faces whose two cells share the same ``owner``."""
    kappa = np.asarray(kappa, dtype=float)
    n = spec.size
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for a in range(3):
        lc, rc = interior_faces(spec, a)
        keep = owner[lc] == owner[rc]
        lc, rc = lc[keep], rc[keep]
        t = face_transmissibility(kappa[lc], kappa[rc]) * (spec.face_area(a) / spec.h[a])
        rows += [lc, rc]
        cols += [rc, lc]
        vals += [-t, -t]
        np.add.at(diag, lc, t)
        np.add.at(diag, rc, t)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    S = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    S.sum_duplicates()
    return S


def cc_coarse_rows(hgrid: HierarchicalGrid, lc: int) -> np.ndarray:
    """(m_cc, sd**3 * lc) rows of R_c belonging to each coarse-coarse element."""
    c = hgrid.coarse_of_cc
    return (c[:, :, None] * lc + np.arange(lc)).reshape(hgrid.m_cc, -1)


def coarse_coarse_bases(hgrid: HierarchicalGrid, kappa, R_c, lc: int, lcc: int, elements=None):
    """Eigenpairs of the compressed problems on coarse-coarse elements.

    Returns ``(eigenvalues, coefficients, rows)``: coefficients have shape
    (m, lcc, sd**3 * lc) and act on the R_c rows listed in ``rows``.
    """
    dim = hgrid.sd**3 * lc
    if not 1 <= lcc <= dim:
        raise ConfigurationError(f"L_cc={lcc} must lie in [1, sd^3 * L_c = {dim}]")
    if R_c.shape != (hgrid.m_c * lc, hgrid.spec.size):
        raise ConfigurationError("R_c does not match the hierarchy and L_c")
    elements = np.arange(hgrid.m_cc) if elements is None else np.atleast_1d(elements)
    owner = np.empty(hgrid.spec.size, dtype=np.int64)
    owner[hgrid.cc_cells] = np.arange(hgrid.m_cc)[:, None]
    S = broken_stiffness(hgrid.spec, kappa, owner)
    P = (R_c @ S @ R_c.T).tocsr()
    rows_all = cc_coarse_rows(hgrid, lc)
    vals = np.empty((elements.size, lcc))
    coefs = np.empty((elements.size, lcc, dim))
    for pos, e in enumerate(elements):
        r = rows_all[e]
        block = P[r][:, r].toarray()
        block = 0.5 * (block + block.T)
        w, v = np.linalg.eigh(block)
        vals[pos] = w[:lcc]
        coefs[pos] = _fix_signs(v[:, :lcc].T)
    return vals, coefs, rows_all[elements]


def coarse_coarse_basis(hgrid: HierarchicalGrid, kappa, R_c, element: int, lc: int, lcc: int):
    if not 0 <= element < hgrid.m_cc:
        raise IndexError(f"coarse-coarse element {element} out of range")
    vals, coefs, rows = coarse_coarse_bases(hgrid, kappa, R_c, lc, lcc, elements=[element])
    return vals[0], coefs[0], rows[0]


def assemble_Rcc(hgrid: HierarchicalGrid, coefs, rows) -> sp.csr_matrix:
    m, lcc, dim = coefs.shape
    n_c = hgrid.m_c * (dim // hgrid.sd**3)
    R = sp.csr_matrix(
        (coefs.ravel(), (np.repeat(np.arange(m * lcc), dim), np.repeat(rows, lcc, axis=0).ravel())),
        shape=(m * lcc, n_c),
    )
    R.sort_indices()
    return R


@dataclass
class MultiscaleHierarchy:
    A: sp.csr_matrix
    R_c: sp.csr_matrix
    R_cc: sp.csr_matrix
    A_c: sp.csr_matrix
    A_cc: np.ndarray
    smoother: SmootherState
    smoother_c: SmootherState
    A_cc_factor: Factorization
    eigenvalues_c: np.ndarray | None = None
    eigenvalues_cc: np.ndarray | None = None

    def apply(self, r):
        return three_grid_apply(self, r)

    def dump_spectra(self, path) -> None:
        """Write per-element eigenvalues as CSV rows (level, element, index, eigenvalue)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "element", "index", "eigenvalue"])
            for level, vals in (("coarse", self.eigenvalues_c), ("coarse_coarse", self.eigenvalues_cc)):
                if vals is None:
                    continue
                for e, row in enumerate(vals):
                    for j, lam in enumerate(row):
                        w.writerow([level, e, j, repr(float(lam))])


def build_hierarchy_operators(A, R_c, R_cc, fine_blocks, coarse_blocks, nu=1, threads=1) -> MultiscaleHierarchy:
    """Galerkin products, smoother factorizations and the coarse-coarse factorization."""
    A = sp.csr_matrix(A)
    R_c = sp.csr_matrix(R_c)
    R_cc = sp.csr_matrix(R_cc)
    if R_c.shape[1] != A.shape[0] or R_cc.shape[1] != R_c.shape[0]:
        raise ConfigurationError(
            f"dimension chain broken: R_cc {R_cc.shape}, R_c {R_c.shape}, A {A.shape}"
        )
    A_c = (R_c @ A @ R_c.T).tocsr()
    A_c = (0.5 * (A_c + A_c.T)).tocsr()
    A_cc = R_cc @ A_c @ R_cc.T
    A_cc = A_cc.toarray() if sp.issparse(A_cc) else np.asarray(A_cc)
    A_cc = 0.5 * (A_cc + A_cc.T)
    try:
        fac = Factorization(A_cc if A_cc.shape[0] <= DENSE_EIG_LIMIT else sp.csr_matrix(A_cc))
    except SolverError as exc:
        raise SolverError(f"coarse-coarse operator is singular: {exc}") from exc
    smoother = SmootherState(A, list(fine_blocks), nu=nu, level="fine", threads=threads)
    smoother_c = SmootherState(A_c, list(coarse_blocks), nu=nu, level="coarse", threads=threads)
    return MultiscaleHierarchy(A, R_c, R_cc, A_c, A_cc, smoother, smoother_c, fac)


def build_mmg(system, hgrid: HierarchicalGrid, lc: int, lcc: int | None, nu: int = 1, threads: int = 1) -> MultiscaleHierarchy:
    """Full set-up of the multiscale multigrid preconditioner for an assembled system.

    ``lcc=None`` keeps the whole coarse space on the coarse-coarse level
    (``R_cc = I``), i.e. the two-grid cycle.
    """
    if system.spec != hgrid.spec:
        raise ConfigurationError("hierarchy and system are on different grids")
    vals_c, vecs = local_spectral_bases(hgrid, system.kappa, lc)
    R_c = assemble_Rc(hgrid, vecs)
    if lcc is None:
        R_cc = sp.identity(R_c.shape[0], format="csr")
        vals_cc = None
    else:
        vals_cc, coefs, rows = coarse_coarse_bases(hgrid, system.kappa, R_c, lc, lcc)
        R_cc = assemble_Rcc(hgrid, coefs, rows)
    h = build_hierarchy_operators(
        system.A, R_c, R_cc, list(hgrid.cc_cells), list(cc_coarse_rows(hgrid, lc)), nu=nu, threads=threads
    )
    h.eigenvalues_c = vals_c
    h.eigenvalues_cc = vals_cc
    return h
