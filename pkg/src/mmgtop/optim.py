"""Mean-temperature objective, adjoint sensitivities, MMA and the continuation loop."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from mmgtop.errors import ConfigurationError, SolverError
from mmgtop.fvm import AssembledSystem, assemble_system
from mmgtop.grid import BoundarySpec, GridSpec, build_hierarchy, interpolate_design
from mmgtop.material import MaterialModel, conductivity, heat_source, material_derivatives
from mmgtop.solver import make_preconditioner, pcg

log = logging.getLogger(__name__)


def mean_temperature(t) -> float:
    return float(np.mean(t))


def adjoint_rhs(M: int) -> np.ndarray:
    """Gradient of the mean with respect to the temperatures."""
    return np.full(M, 1.0 / M)


def sensitivity(x, t, u, system: AssembledSystem, material: MaterialModel) -> np.ndarray:
    """d(mean T)/dx per cell from the state ``t`` and adjoint ``u``.

    Evaluates u^T (df/dx_e - dA/dx_e t) face by face without forming dA/dx.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    dk, df = material_derivatives(x, material)
    fs = system.faces
    kappa = system.kappa
    grad = u * df * system.spec.cell_volume

    # interior faces: T_F = geom * 2 k1 k2 / (k1 + k2), dT_F/dk1 = geom * (k_F / k1)^2 / 2
    kf = system.trans / fs.geom
    w = (u[fs.left] - u[fs.right]) * (t[fs.left] - t[fs.right])
    dl = fs.geom * 0.5 * (kf / kappa[fs.left]) ** 2
    dr = fs.geom * 0.5 * (kf / kappa[fs.right]) ** 2
    np.add.at(grad, fs.left, -w * dl * dk[fs.left])
    np.add.at(grad, fs.right, -w * dr * dk[fs.right])

    # Dirichlet faces: T_F = geom * k_cell, enters the diagonal and the lift T_F * T_D
    c = fs.bc_cell
    np.add.at(grad, c, u[c] * fs.bc_geom * dk[c] * (fs.bc_value - t[c]))
    return grad


@dataclass
class MmaState:
    n: int
    low: np.ndarray | None = None
    upp: np.ndarray | None = None
    xold1: np.ndarray | None = None
    xold2: np.ndarray | None = None
    iteration: int = 0


@dataclass
class OptimConfig:
    vstar: float = 0.05
    schedule: list[GridSpec] = field(default_factory=lambda: [GridSpec.cube(32)])
    max_iters: list[int] = field(default_factory=lambda: [30])
    move: float = 0.2
    asyinit: float = 0.5
    asyincr: float = 1.2
    asydecr: float = 0.7
    dx_tol: float = 0.01
    rtol: float = 1e-6
    maxit: int = 10000
    ncc: tuple[int, int, int] = (2, 2, 2)
    sd: int = 4
    lc: int = 4
    lcc: int = 17
    nu: int = 1
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.vstar <= 1:
            raise ConfigurationError("vstar must lie in (0, 1]")
        if len(self.schedule) != len(self.max_iters) or not self.schedule:
            raise ConfigurationError("schedule and max_iters must be non-empty and of equal length")
        for lo, hi in zip(self.schedule, self.schedule[1:]):
            if any(h % l or h <= l for l, h in zip(lo.shape_xyz, hi.shape_xyz)):
                raise ConfigurationError(f"schedule must refine by integer factors: {lo.shape_xyz} -> {hi.shape_xyz}")


def mma_update(state: MmaState, x, grad, gval, ggrad, cfg: OptimConfig, xmin=0.0, xmax=1.0):
    """One MMA step for min f(x) s.t. g(x) <= 0, xmin <= x <= xmax.

    ``gval``/``ggrad`` are the single constraint's value and gradient at x.
    The convex separable subproblem is solved through its one-dimensional
    dual by bisection on the multiplier. Returns ``(x_new, state)``.
    """
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    ggrad = np.broadcast_to(np.asarray(ggrad, dtype=float), x.shape)
    n = x.size
    span = np.broadcast_to(np.asarray(xmax - xmin, dtype=float), x.shape)
    xmin = np.broadcast_to(np.asarray(xmin, dtype=float), x.shape)
    xmax = np.broadcast_to(np.asarray(xmax, dtype=float), x.shape)
    it = state.iteration + 1

    if it <= 2 or state.low is None:
        low = x - cfg.asyinit * span
        upp = x + cfg.asyinit * span
    else:
        osc = (x - state.xold1) * (state.xold1 - state.xold2)
        factor = np.ones(n)
        factor[osc > 0] = cfg.asyincr
        factor[osc < 0] = cfg.asydecr
        low = x - factor * (state.xold1 - state.low)
        upp = x + factor * (state.upp - state.xold1)
        low = np.clip(low, x - 10.0 * span, x - 0.01 * span)
        upp = np.clip(upp, x + 0.01 * span, x + 10.0 * span)
    if not (np.all(low < x) and np.all(x < upp)):
        # asymptote collapse: restart from the defaults
        low = x - cfg.asyinit * span
        upp = x + cfg.asyinit * span

    alpha = np.maximum.reduce([xmin, low + 0.1 * (x - low), x - cfg.move * span])
    beta = np.minimum.reduce([xmax, upp - 0.1 * (upp - x), x + cfg.move * span])

    ux2 = (upp - x) ** 2
    xl2 = (x - low) ** 2
    reg = 1e-5 / np.maximum(span, 1e-5)

    def pq(g):
        gp, gm = np.maximum(g, 0.0), np.maximum(-g, 0.0)
        r = 1e-3 * (gp + gm) + reg
        return (gp + r) * ux2, (gm + r) * xl2

    p0, q0 = pq(grad)
    p1, q1 = pq(ggrad)
    b = np.sum(p1 / (upp - x) + q1 / (x - low)) - gval

    def primal(lam):
        P = p0 + lam * p1
        Q = q0 + lam * q1
        sp_, sq = np.sqrt(P), np.sqrt(Q)
        xs = (sp_ * low + sq * upp) / (sp_ + sq)
        return np.clip(xs, alpha, beta)

    def con(lam):
        xs = primal(lam)
        return np.sum(p1 / (upp - xs) + q1 / (xs - low)) - b

    lam_lo, lam_hi = 0.0, 1.0
    if con(0.0) <= 0.0:
        lam = 0.0
    else:
        while con(lam_hi) > 0.0 and lam_hi < 1e40:
            lam_lo = lam_hi
            lam_hi *= 10.0
        if con(lam_hi) > 0.0:
            # the move limits forbid feasibility this step; go as far towards it as allowed
            log.warning("MMA subproblem infeasible within the move limits (g = %.3e)", gval)
            return primal(lam_hi), _advance(state, low, upp, x, it)
        for _ in range(200):
            mid = 0.5 * (lam_lo + lam_hi)
            if con(mid) > 0.0:
                lam_lo = mid
            else:
                lam_hi = mid
            if lam_hi - lam_lo <= 1e-15 * lam_hi:
                break
        lam = lam_hi  # feasible end of the bracket
    return primal(lam), _advance(state, low, upp, x, it)


def _advance(state, low, upp, x, it):
    prev = state.xold1.copy() if state.xold1 is not None else x.copy()
    return MmaState(state.n, low, upp, x.copy(), prev, it)


@dataclass
class IterationRecord:
    level: int
    iteration: int
    cost: float
    volume: float
    ls1_iters: int
    ls2_iters: int
    setup_s: float
    ls1_s: float
    ls2_s: float
    dofs: int


@dataclass
class OptimResult:
    x: np.ndarray
    grid: GridSpec
    temperature: np.ndarray
    cost: float
    records: list[IterationRecord]

    @property
    def total_linear_iterations(self) -> int:
        return sum(r.ls1_iters + r.ls2_iters for r in self.records)


def evaluate(x, spec, material, boundary, cfg: OptimConfig, precond="mmg", t0=None, u0=None):
    """Set-up plus the state and adjoint solves for one design.

    Returns ``(cost, grad, t, u, record_fields)``.
    """
    system = assemble_system(spec, conductivity(x, material), heat_source(x, material), boundary)
    hgrid = build_hierarchy(spec, cfg.ncc, cfg.sd)
    pc = make_preconditioner(precond, system, hgrid, lc=cfg.lc, lcc=cfg.lcc, nu=cfg.nu, threads=cfg.threads)
    t, rep1 = pcg(system.A, system.rhs, pc, cfg.rtol, cfg.maxit, x0=t0, tag=precond)
    u, rep2 = pcg(system.A, adjoint_rhs(spec.size), pc, cfg.rtol, cfg.maxit, x0=u0, tag=precond)
    for name, rep in (("LS1", rep1), ("LS2", rep2)):
        if not rep.converged:
            raise SolverError(f"{name} did not converge in {cfg.maxit} iterations (residual {rep.history[-1]:.3e})")
    cost = mean_temperature(t)
    grad = sensitivity(x, t, u, system, material)
    return cost, grad, t, u, (rep1.iterations, rep2.iterations, pc.setup_seconds, rep1.seconds, rep2.seconds)


def optimize(cfg: OptimConfig, material: MaterialModel, boundary: BoundarySpec, precond="mmg", x0=None, callback=None) -> OptimResult:
    """Run MMA over the resolution schedule, prolonging the design between levels."""
    records: list[IterationRecord] = []
    x = None
    prev = None
    t = u = None
    for level, (spec, budget) in enumerate(zip(cfg.schedule, cfg.max_iters)):
        if x is None:
            x = np.full(spec.size, cfg.vstar) if x0 is None else np.asarray(x0, dtype=float).copy()
        else:
            x = interpolate_design(x, prev, spec)
            t = interpolate_design(t, prev, spec)
            # the adjoint scales like h**2 (operator ~ h, right-hand side ~ h**3)
            u = interpolate_design(u, prev, spec) * (spec.hx / prev.hx) ** 2
        prev = spec
        M = spec.size
        state = MmaState(M)
        it = 0
        settled = False
        while True:
            cost, grad, t, u, (i1, i2, ts, t1, t2) = evaluate(x, spec, material, boundary, cfg, precond, t, u)
            vol = float(np.mean(x))
            rec = IterationRecord(level, it, cost, vol, i1, i2, ts, t1, t2, M)
            records.append(rec)
            log.info("level %d iter %d cost %.6g vol %.6f ls1 %d ls2 %d", level, it, cost, vol, i1, i2)
            if callback is not None:
                callback(rec)
            if it >= budget or settled:
                break
            x_new, state = mma_update(state, x, grad, vol - cfg.vstar, np.full(M, 1.0 / M), cfg)
            x_new = np.clip(x_new, 0.0, 1.0)
            settled = float(np.max(np.abs(x_new - x))) < cfg.dx_tol
            x = x_new
            it += 1
    return OptimResult(x, prev, t, records[-1].cost, records)
