import hypothesis
import numpy as np
import pytest
import scipy.linalg as sla

from mmgtop.fvm import assemble_system
from mmgtop.grid import BoundarySpec, GridSpec
from mmgtop.material import MaterialModel, conductivity, heat_source

hypothesis.settings.register_profile("default", deadline=None, max_examples=30)
hypothesis.settings.load_profile("default")


def dense_tpfa(spec, kappa, f, bc):
    """Loop-by-loop assembly used as an independent oracle."""
    n = spec.size
    A = np.zeros((n, n))
    b = np.zeros(n)
    h = spec.h
    for k in range(spec.nz):
        for j in range(spec.ny):
            for i in range(spec.nx):
                c = spec.index(i, j, k)
                b[c] += f[c] * h[0] * h[1] * h[2]
                for axis, (di, dj, dk) in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
                    ii, jj, kk = i + di, j + dj, k + dk
                    if ii < spec.nx and jj < spec.ny and kk < spec.nz:
                        d = spec.index(ii, jj, kk)
                        kf = 2.0 / (1.0 / kappa[c] + 1.0 / kappa[d])
                        t = kf * spec.face_area(axis) / h[axis]
                        A[c, c] += t
                        A[d, d] += t
                        A[c, d] -= t
                        A[d, c] -= t
    if bc is not None:
        for p in bc.dirichlet_patches:
            a = p.axis
            for c in p.cells(spec):
                t = kappa[c] * spec.face_area(a) / (h[a] / 2)
                A[c, c] += t
                b[c] += t * p.value
    return A, b


def random_system(n, cr, seed, binary=False, kappa_lo=1.0):
    rng = np.random.default_rng(seed)
    spec = GridSpec.cube(n)
    x = rng.random(spec.size)
    if binary:
        x = (x < 0.3).astype(float)
    m = MaterialModel.from_contrast(cr, kappa_lo=kappa_lo)
    bc = BoundarySpec.bottom_center(width=0.5)
    return assemble_system(spec, conductivity(x, m), heat_source(x, m), bc), x, m


def local_oracle(hg, kappa, element):
    """Dense generalized eigenproblem on one coarse element, assembled by loops."""
    bx, by, bz = hg.coarse_block
    spec = hg.spec
    local = GridSpec(bx, by, bz, bx * spec.hx, by * spec.hy, bz * spec.hz)
    k = kappa[hg.coarse_cells[element]]
    S, _ = dense_tpfa(local, k, np.zeros(k.size), None)
    M = np.diag(k * spec.cell_volume)
    return S, M, *sla.eigh(S, M)


def cc_dense_oracle(hg, kappa, vecs, lc, element):
    spec = hg.spec
    cells = hg.cc_cells[element]
    n_cc = cells.size
    b = tuple(n // c for n, c in zip(spec.shape_xyz, hg.ncc))
    local = GridSpec(*b, *(bb * h for bb, h in zip(b, spec.h)))
    S, _ = dense_tpfa(local, kappa[cells], np.zeros(n_cc), None)
    pos = {c: p for p, c in enumerate(cells)}
    rows = []
    for ce in hg.coarse_of_cc[element]:
        for j in range(lc):
            r = np.zeros(n_cc)
            for c, v in zip(hg.coarse_cells[ce], vecs[ce, j]):
                r[pos[c]] = v
            rows.append(r)
    R = np.array(rows)
    return sla.eigh(R @ S @ R.T)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def report():
    """Record one acceptance line; printed in the terminal summary."""

    def _record(n, ok, detail):
        ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
