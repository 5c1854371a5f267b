"""Contrast-robustness benchmark on frozen designs."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from mmgtop.errors import SolverError
from mmgtop.fvm import assemble_system
from mmgtop.grid import BoundarySpec, GridSpec, HierarchicalGrid
from mmgtop.material import MaterialModel, conductivity, heat_source
from mmgtop.optim import adjoint_rhs
from mmgtop.solver import make_preconditioner, pcg

log = logging.getLogger(__name__)

# Numerical Recipes constants, modulus 2**32
LCG_A = 1664525
LCG_C = 1013904223
LCG_M = 2**32


def lcg_uniform(seed: int, n: int) -> np.ndarray:
    """``n`` draws u_k = s_k / 2**32 with s_{k+1} = (A s_k + C) mod 2**32, s_0 = seed."""
    out = np.empty(n)
    s = int(seed) % LCG_M
    for k in range(n):
        s = (LCG_A * s + LCG_C) % LCG_M
        out[k] = s / LCG_M
    return out


def binomial_smooth(field3d: np.ndarray, passes: int) -> np.ndarray:
    """``passes`` periodic [1, 2, 1] / 4 sweeps along every axis."""
    f = np.asarray(field3d, dtype=float)
    for _ in range(passes):
        for ax in range(3):
            f = 0.25 * np.roll(f, 1, axis=ax) + 0.5 * f + 0.25 * np.roll(f, -1, axis=ax)
    return f


def frozen_design(spec: GridSpec, vstar: float, seed: int = 1, passes: int = 2) -> np.ndarray:
    """Seeded 0/1 design with exactly round(vstar * M) solid cells.

    LCG noise is smoothed so that solid cells form clusters of a few cells,
    then the largest values (ties to the lower index) are set to 1.
    """
    noise = lcg_uniform(seed, spec.size).reshape(spec.shape)
    f = binomial_smooth(noise, passes).ravel()
    k = int(round(vstar * spec.size))
    order = np.argsort(-f, kind="stable")
    x = np.zeros(spec.size)
    x[order[:k]] = 1.0
    return x


@dataclass
class BenchRow:
    cr: int
    preconditioner: str
    dofs: int
    setup_s: float
    ls1_iters: int
    ls1_s: float
    ls2_iters: int
    ls2_s: float
    status: str

    @property
    def total_s(self) -> float:
        return self.setup_s + self.ls1_s + self.ls2_s


def bench_one(x, hgrid: HierarchicalGrid, material: MaterialModel, boundary: BoundarySpec, kind: str,
              lc=4, lcc=17, nu=1, rtol=1e-6, maxit=10000, threads=1, cr=0) -> BenchRow:
    spec = hgrid.spec
    system = assemble_system(spec, conductivity(x, material), heat_source(x, material), boundary)
    try:
        pc = make_preconditioner(kind, system, hgrid, lc=lc, lcc=lcc, nu=nu, threads=threads)
        _, r1 = pcg(system.A, system.rhs, pc, rtol, maxit, tag=kind)
        _, r2 = pcg(system.A, adjoint_rhs(spec.size), pc, rtol, maxit, tag=kind)
    except SolverError as exc:
        log.warning("cr=%s %s failed: %s", cr, kind, exc)
        return BenchRow(cr, kind, spec.size, float("nan"), -1, float("nan"), -1, float("nan"), "DNF")
    status = "ok" if r1.converged and r2.converged else "DNF"
    return BenchRow(cr, kind, spec.size, pc.setup_seconds, r1.iterations, r1.seconds, r2.iterations, r2.seconds, status)


def run_bench(x, hgrid, boundary, crs, kinds, kappa_lo=0.01, f0=1.0, p=3, **kw) -> list[BenchRow]:
    rows = []
    for cr in crs:
        material = MaterialModel.from_contrast(cr, kappa_lo=kappa_lo, f0=f0, p=p)
        for kind in kinds:
            row = bench_one(x, hgrid, material, boundary, kind, cr=cr, **kw)
            log.info("cr=%d %-12s ls1 %d ls2 %d %s", cr, kind, row.ls1_iters, row.ls2_iters, row.status)
            rows.append(row)
    return rows


def _cell(seconds, iters, status):
    if status == "DNF":
        return "DNF" if iters < 0 else f"DNF({iters})"
    return f"{seconds:.1f}({iters})"


def format_table(rows: list[BenchRow]) -> str:
    """Set-up / LS1 / LS2 / relative-total table per contrast, ``time(iter)`` cells.

    Relative totals are against the first preconditioner listed for that contrast.
    """
    out = []
    for cr in sorted({r.cr for r in rows}):
        sub = [r for r in rows if r.cr == cr]
        ref = sub[0].total_s
        width = max(12, *(len(r.preconditioner) + 2 for r in sub))
        out.append(f"cr = {cr}, DoF = {sub[0].dofs}")
        out.append("".ljust(24) + "".join(r.preconditioner.rjust(width) for r in sub))
        out.append("Set-up".ljust(24) + "".join(("-" if r.status == "DNF" and r.ls1_iters < 0 else f"{r.setup_s:.1f}").rjust(width) for r in sub))
        out.append("Solve LS1".ljust(24) + "".join(_cell(r.ls1_s, r.ls1_iters, r.status).rjust(width) for r in sub))
        out.append("Solve LS2".ljust(24) + "".join(_cell(r.ls2_s, r.ls2_iters, r.status).rjust(width) for r in sub))
        rel = [("-" if r.status == "DNF" or not ref > 0 else f"{100 * r.total_s / ref:.1f}%") for r in sub]
        out.append("Relative time in total".ljust(24) + "".join(v.rjust(width) for v in rel))
        out.append("")
    return "\n".join(out)
