"""Command-line entry point: ``mmgtop [--config FILE] [--key value ...] [--bench] [--dry-run]``.

The config file is flat ``key = value`` text (``#`` comments). Every key
can be overridden by the flag of the same name (underscores or dashes).
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from mmgtop.bench import format_table, frozen_design, run_bench
from mmgtop.errors import ConfigurationError, SolverError
from mmgtop.grid import BoundarySpec, DirichletPatch, GridSpec, build_hierarchy
from mmgtop.io import write_csv, write_vtk
from mmgtop.material import MaterialModel
from mmgtop.optim import OptimConfig, optimize

log = logging.getLogger("mmgtop")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

PRECONDITIONERS = ("mmg", "two_grid", "block_jacobi", "jacobi", "none")


def _ints(text) -> list[int]:
    return [int(v) for v in str(text).replace(",", " ").split()]


@dataclass
class RunConfig:
    nx: int = 32
    ny: int = 32
    nz: int = 32
    lx: float = 1.0
    ly: float = 1.0
    lz: float = 1.0
    ncc: int = 2
    sd: int = 4
    lc: int = 4
    lcc: int = 17
    nu: int = 1
    cr: int = 4
    kappa_lo: float = 0.01
    p: int = 3
    f0: float = 1.0
    td: float = 100.0
    patch_face: str = "z-"
    patch_size: float = 0.1
    vstar: float = 0.05
    iters: str = "30"  # per-level MMA budgets, coarsest first; each extra level halves the grid
    move: float = 0.2
    dx_tol: float = 0.01
    rtol: float = 1e-6
    maxit: int = 10000
    precond: str = "mmg"
    threads: int = 1
    out_dir: str = "out"
    seed: int = 1
    smooth_passes: int = 2
    bench_cr: str = "1,2,3,4,5,6"
    bench_precond: str = "jacobi,block_jacobi,two_grid,mmg"
    design: str = ""  # optional .npy design for --bench
    dump_spectra: bool = False

    @property
    def budgets(self) -> list[int]:
        return _ints(self.iters)

    @property
    def schedule(self) -> list[GridSpec]:
        levels = len(self.budgets)
        out = []
        for k in reversed(range(levels)):
            f = 2**k
            if self.nx % f or self.ny % f or self.nz % f:
                raise ConfigurationError(f"grid {self.nx}x{self.ny}x{self.nz} cannot be halved {k} times")
            out.append(GridSpec(self.nx // f, self.ny // f, self.nz // f, self.lx, self.ly, self.lz))
        return out

    @property
    def fine(self) -> GridSpec:
        return GridSpec(self.nx, self.ny, self.nz, self.lx, self.ly, self.lz)

    def material(self, cr: int | None = None) -> MaterialModel:
        return MaterialModel.from_contrast(self.cr if cr is None else cr, kappa_lo=self.kappa_lo, f0=self.f0, p=self.p)

    def boundary(self) -> BoundarySpec:
        spec = self.fine
        ext = {"x": (spec.ly, spec.lz), "y": (spec.lx, spec.lz), "z": (spec.lx, spec.ly)}[self.patch_face[0]]
        w = self.patch_size / 2
        lo = (ext[0] / 2 - w, ext[1] / 2 - w)
        hi = (ext[0] / 2 + w, ext[1] / 2 + w)
        return BoundarySpec((DirichletPatch(self.patch_face, lo, hi, self.td),))

    def optim_config(self) -> OptimConfig:
        return OptimConfig(
            vstar=self.vstar, schedule=self.schedule, max_iters=self.budgets, move=self.move,
            dx_tol=self.dx_tol, rtol=self.rtol, maxit=self.maxit, ncc=(self.ncc,) * 3, sd=self.sd,
            lc=self.lc, lcc=self.lcc, nu=self.nu, threads=self.threads,
        )

    def validate(self) -> None:
        """Cross-module checks, run before any computation."""
        if self.precond not in PRECONDITIONERS:
            raise ConfigurationError(f"precond must be one of {PRECONDITIONERS}, got {self.precond!r}")
        for kind in self.bench_precond.split(","):
            if kind.strip() not in PRECONDITIONERS:
                raise ConfigurationError(f"unknown bench preconditioner {kind!r}")
        if min(self.budgets, default=-1) < 0:
            raise ConfigurationError("iters must list nonnegative budgets")
        self.material()
        for cr in _ints(self.bench_cr):
            self.material(cr)
        if not 0 < self.patch_size:
            raise ConfigurationError("patch_size must be positive")
        self.optim_config()
        for spec in self.schedule:
            hg = build_hierarchy(spec, self.ncc, self.sd)
            if not 1 <= self.lc <= hg.cells_per_coarse:
                raise ConfigurationError(
                    f"lc={self.lc} exceeds the {hg.cells_per_coarse} cells of a coarse element on {spec.shape_xyz}"
                )
            if not 1 <= self.lcc <= self.sd**3 * self.lc:
                raise ConfigurationError(f"lcc={self.lcc} exceeds sd^3 * lc = {self.sd**3 * self.lc}")
            self.boundary().faces(spec)

    def resolved(self) -> str:
        return "\n".join(f"{f.name} = {getattr(self, f.name)}" for f in fields(self))


def _coerce(f: dataclasses.Field, raw):
    if f.type in ("bool", bool):
        if isinstance(raw, bool):
            return raw
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    caster = {"int": int, "float": float, "str": str}.get(f.type, str)
    try:
        return caster(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {f.name}: {raw!r}") from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    known = {f.name: f for f in fields(RunConfig)}
    values = {}
    if path:
        text = Path(path).read_text()
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
        cp.optionxform = str
        try:
            cp.read_string("[run]\n" + text)
        except configparser.Error as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
        for key, raw in cp["run"].items():
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ConfigurationError(f"unknown config key {key!r} in {path}")
            values[key] = _coerce(known[key], raw)
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = _coerce(known[key], raw)
    return RunConfig(**values)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmgtop", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="flat key = value config file")
    ap.add_argument("--dry-run", action="store_true", help="validate and print the resolved config")
    ap.add_argument("--bench", action="store_true", help="run the contrast benchmark instead of optimizing")
    ap.add_argument("-v", "--verbose", action="store_true")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            ap.add_argument(flag, dest=f.name, action="store_const", const=True, default=None)
        else:
            ap.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())
    return ap


def run_optimize(cfg: RunConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = optimize(cfg.optim_config(), cfg.material(), cfg.boundary(), precond=cfg.precond)
    files = {
        "design": write_vtk(result.x, result.grid, out / "design.vtk", "design"),
        "temperature": write_vtk(result.temperature, result.grid, out / "temperature.vtk", "temperature"),
        "trajectory": write_csv(
            out / "trajectory.csv",
            ["level", "iter", "cost", "volume", "ls1_iters", "ls2_iters"],
            [[r.level, r.iteration, repr(r.cost), repr(r.volume), r.ls1_iters, r.ls2_iters] for r in result.records],
        ),
    }
    write_csv(
        out / "timings.csv",
        ["level", "iter", "setup_s", "ls1_s", "ls2_s"],
        [[r.level, r.iteration, f"{r.setup_s:.6f}", f"{r.ls1_s:.6f}", f"{r.ls2_s:.6f}"] for r in result.records],
    )
    first = result.records[0]
    summary = [
        f"grid {result.grid.shape_xyz}, cr = {cfg.cr}, V* = {cfg.vstar}, preconditioner {cfg.precond}",
        f"levels {[s.shape_xyz for s in cfg.schedule]}, budgets {cfg.budgets}",
        f"initial mean temperature {first.cost:.6g}",
        f"final mean temperature   {result.cost:.6g}",
        f"final volume fraction    {float(np.mean(result.x)):.6g}",
        f"MMA iterations {len(result.records) - len(cfg.schedule)}, PCG iterations {result.total_linear_iterations}",
        f"wall time set-up {sum(r.setup_s for r in result.records):.1f}s, "
        f"LS1 {sum(r.ls1_s for r in result.records):.1f}s, LS2 {sum(r.ls2_s for r in result.records):.1f}s",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return files


def run_bench_cmd(cfg: RunConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.fine
    x = np.load(cfg.design) if cfg.design else frozen_design(spec, cfg.vstar, cfg.seed, cfg.smooth_passes)
    if x.size != spec.size:
        raise ConfigurationError(f"design has {x.size} cells, grid has {spec.size}")
    hgrid = build_hierarchy(spec, cfg.ncc, cfg.sd)
    kinds = [k.strip() for k in cfg.bench_precond.split(",")]
    rows = run_bench(
        x, hgrid, cfg.boundary(), _ints(cfg.bench_cr), kinds, kappa_lo=cfg.kappa_lo, f0=cfg.f0, p=cfg.p,
        lc=cfg.lc, lcc=cfg.lcc, nu=cfg.nu, rtol=cfg.rtol, maxit=cfg.maxit, threads=cfg.threads,
    )
    iters, times = [], []
    for r in rows:
        for phase, it, sec in (("setup", 0, r.setup_s), ("LS1", r.ls1_iters, r.ls1_s), ("LS2", r.ls2_iters, r.ls2_s)):
            iters.append([phase, r.preconditioner, r.cr, r.dofs, it, r.status])
            times.append([phase, r.preconditioner, r.cr, r.dofs, f"{sec:.6f}"])
    files = {
        "bench": write_csv(out / "bench.csv", ["phase", "preconditioner", "cr", "dof", "iterations", "status"], iters),
        "timings": write_csv(out / "bench_timings.csv", ["phase", "preconditioner", "cr", "dof", "seconds"], times),
    }
    table = format_table(rows)
    (out / "bench_table.txt").write_text(table + "\n")
    print(table)
    return files


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    try:
        cfg = load_config(args.config, overrides)
        cfg.validate()
    except (ConfigurationError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dry_run:
        print(cfg.resolved())
        return EXIT_OK
    try:
        if args.bench:
            run_bench_cmd(cfg)
        else:
            run_optimize(cfg)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
