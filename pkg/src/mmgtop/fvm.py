"""Two-point flux approximation of steady heat conduction on a structured grid.

Interior faces couple their two cells with transmissibility
``kappa_F * area / h`` where ``kappa_F`` is the harmonic mean of the cell
conductivities. Dirichlet patch faces use the half-cell closure
``kappa_cell * area / (h / 2)``; all other boundary faces are insulated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from mmgtop.errors import ConfigurationError
from mmgtop.grid import BoundarySpec, GridSpec


def face_transmissibility(kappa_left, kappa_right):
    """Harmonic mean 2 k1 k2 / (k1 + k2); elementwise for arrays."""
    k1 = np.asarray(kappa_left, dtype=float)
    k2 = np.asarray(kappa_right, dtype=float)
    if np.any(k1 <= 0) or np.any(k2 <= 0):
        raise ValueError("conductivities must be positive")
    out = 2.0 * k1 * k2 / (k1 + k2)
    return out if out.ndim else float(out)


def interior_faces(spec: GridSpec, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """(left, right) cell indices of every interior face normal to ``axis``."""
    idx = np.arange(spec.size).reshape(spec.shape)
    ax = 2 - axis  # array axes are (z, y, x)
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[ax] = slice(0, -1)
    hi[ax] = slice(1, None)
    return idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()


@dataclass
class FaceSet:
    """Every face carrying a transmissibility, in a fixed order.

    ``left``/``right`` list interior faces (all x-faces, then y, then z);
    ``geom`` is area/h for each. Dirichlet faces are listed separately with
    their half-cell geometric factor ``2 * area / h`` and boundary value.
    """

    left: np.ndarray
    right: np.ndarray
    axis: np.ndarray
    geom: np.ndarray
    bc_cell: np.ndarray
    bc_axis: np.ndarray
    bc_geom: np.ndarray
    bc_value: np.ndarray


def build_faces(spec: GridSpec, bc: BoundarySpec | None) -> FaceSet:
    left, right, axis, geom = [], [], [], []
    for a in range(3):
        lc, rc = interior_faces(spec, a)
        left.append(lc)
        right.append(rc)
        axis.append(np.full(lc.size, a))
        geom.append(np.full(lc.size, spec.face_area(a) / spec.h[a]))
    bc_cell, bc_axis, bc_geom, bc_value = [], [], [], []
    if bc is not None:
        for a, cells, value in bc.faces(spec):
            bc_cell.append(cells)
            bc_axis.append(np.full(cells.size, a))
            bc_geom.append(np.full(cells.size, 2.0 * spec.face_area(a) / spec.h[a]))
            bc_value.append(np.full(cells.size, value))

    def cat(parts, dtype):
        return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

    return FaceSet(
        cat(left, np.int64), cat(right, np.int64), cat(axis, np.int64), cat(geom, float),
        cat(bc_cell, np.int64), cat(bc_axis, np.int64), cat(bc_geom, float), cat(bc_value, float),
    )


@dataclass
class AssembledSystem:
    A: sp.csr_matrix
    rhs: np.ndarray
    spec: GridSpec
    bc: BoundarySpec | None
    kappa: np.ndarray
    source: np.ndarray
    faces: FaceSet
    trans: np.ndarray  # interior face transmissibilities, FaceSet order
    bc_trans: np.ndarray  # Dirichlet face transmissibilities


def _csr(n, rows, cols, vals) -> sp.csr_matrix:
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_system(spec: GridSpec, kappa, f, bc: BoundarySpec | None, *, allow_singular=False) -> AssembledSystem:
    """Assemble the TPFA system ``A t = rhs``.

    ``allow_singular`` permits a pure-Neumann problem (only useful for tests
    and for local operators); otherwise a missing Dirichlet patch is an error.
    """
    kappa = np.asarray(kappa, dtype=float)
    f = np.asarray(f, dtype=float)
    if kappa.shape != (spec.size,) or f.shape != (spec.size,):
        raise ValueError(f"kappa and f must have length {spec.size}")
    if np.any(kappa <= 0):
        raise ValueError("conductivity must be positive everywhere")
    if bc is None or not bc.dirichlet_patches:
        if not allow_singular:
            raise ConfigurationError("no Dirichlet patch: the system would be singular")
        bc = None
    faces = build_faces(spec, bc)
    trans = face_transmissibility(kappa[faces.left], kappa[faces.right]) * faces.geom
    bc_trans = kappa[faces.bc_cell] * faces.bc_geom

    n = spec.size
    diag = np.zeros(n)
    np.add.at(diag, faces.left, trans)
    np.add.at(diag, faces.right, trans)
    np.add.at(diag, faces.bc_cell, bc_trans)
    rows = np.concatenate([np.arange(n), faces.left, faces.right])
    cols = np.concatenate([np.arange(n), faces.right, faces.left])
    vals = np.concatenate([diag, -trans, -trans])
    A = _csr(n, rows, cols, vals)

    rhs = f * spec.cell_volume
    np.add.at(rhs, faces.bc_cell, bc_trans * faces.bc_value)
    return AssembledSystem(A, rhs, spec, bc, kappa, f, faces, trans, bc_trans)


def apply_operator(A: sp.spmatrix, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (A.shape[1],):
        raise ValueError(f"vector of length {v.shape} does not match operator {A.shape}")
    return A @ v


def recover_flux(system: AssembledSystem, t) -> dict[str, np.ndarray]:
    """Face heat flows for a temperature field.

    Returns ``interior`` (flow from left to right cell through each interior
    face, i.e. flux density times area, positive along +axis) and
    ``dirichlet`` (flow out of the domain through each Dirichlet face).
    """
    t = np.asarray(t, dtype=float)
    fs = system.faces
    interior = system.trans * (t[fs.left] - t[fs.right])
    dirichlet = system.bc_trans * (t[fs.bc_cell] - fs.bc_value)
    return {"interior": interior, "dirichlet": dirichlet}


def flux_balance(system: AssembledSystem, t) -> np.ndarray:
    """Per-cell net outflow minus generated heat; zero for the exact solution."""
    flows = recover_flux(system, t)
    fs = system.faces
    out = np.zeros(system.spec.size)
    np.add.at(out, fs.left, flows["interior"])
    np.add.at(out, fs.right, -flows["interior"])
    np.add.at(out, fs.bc_cell, flows["dirichlet"])
    return out - system.source * system.spec.cell_volume


def write_matrix_market(A: sp.spmatrix, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), precision=17, symmetry="general")
