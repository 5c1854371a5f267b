"""Structured grids, the three-level hierarchy, and Dirichlet boundary patches.

Cells are numbered x-fastest: ``idx = i + nx * (j + ny * k)``. Every per-cell
array in the package uses this ordering, and ``array.reshape(nz, ny, nx)``
recovers the 3-D layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from mmgtop.errors import ConfigurationError

AXES = ("x", "y", "z")
FACES = ("x-", "x+", "y-", "y+", "z-", "z+")


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    nz: int
    lx: float = 1.0
    ly: float = 1.0
    lz: float = 1.0

    def __post_init__(self):
        for n in (self.nx, self.ny, self.nz):
            if int(n) != n or n <= 0:
                raise ConfigurationError(f"cell counts must be positive integers, got {self.shape_xyz}")
        for ell in (self.lx, self.ly, self.lz):
            if not ell > 0:
                raise ConfigurationError("domain extents must be positive")

    @classmethod
    def cube(cls, n: int, length: float = 1.0) -> "GridSpec":
        return cls(n, n, n, length, length, length)

    @property
    def shape_xyz(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape ``(nz, ny, nx)`` matching the flat cell ordering."""
        return (self.nz, self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def hz(self) -> float:
        return self.lz / self.nz

    @property
    def h(self) -> tuple[float, float, float]:
        return (self.hx, self.hy, self.hz)

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy * self.hz

    def face_area(self, axis: int) -> float:
        """Area of a face whose normal points along ``axis`` (0=x, 1=y, 2=z)."""
        hx, hy, hz = self.h
        return (hy * hz, hx * hz, hx * hy)[axis]

    def index(self, i, j, k):
        return i + self.nx * (j + self.ny * k)

    def ijk(self, idx):
        idx = np.asarray(idx)
        i = idx % self.nx
        j = (idx // self.nx) % self.ny
        k = idx // (self.nx * self.ny)
        return i, j, k

    def refine(self, factor: int) -> "GridSpec":
        return GridSpec(self.nx * factor, self.ny * factor, self.nz * factor, self.lx, self.ly, self.lz)


def _blocks(spec: GridSpec, nblocks: tuple[int, int, int]) -> np.ndarray:
    """Cell indices grouped into an ``nblocks`` partition, shape (n_blocks, cells_per_block).

    Blocks are ordered x-fastest over the block grid; cells x-fastest inside a block.
    """
    bx, by, bz = (n // b for n, b in zip(spec.shape_xyz, nblocks))
    cx, cy, cz = nblocks
    idx = np.arange(spec.size).reshape(cz, bz, cy, by, cx, bx)
    return np.ascontiguousarray(idx.transpose(0, 2, 4, 1, 3, 5).reshape(cx * cy * cz, bx * by * bz))


@dataclass(frozen=True)
class HierarchicalGrid:
    """Fine / coarse / coarse-coarse partition of a structured grid.

    Each coarse-coarse element is split into ``sd`` parts per axis to form the
    coarse elements, so ``m_c = sd**3 * m_cc``.
    """

    spec: GridSpec
    ncc: tuple[int, int, int]
    sd: int

    @property
    def n_coarse_axes(self) -> tuple[int, int, int]:
        return tuple(c * self.sd for c in self.ncc)

    @property
    def m_cc(self) -> int:
        return int(np.prod(self.ncc))

    @property
    def m_c(self) -> int:
        return self.sd**3 * self.m_cc

    @property
    def coarse_block(self) -> tuple[int, int, int]:
        """Fine cells per axis inside one coarse element."""
        return tuple(n // c for n, c in zip(self.spec.shape_xyz, self.n_coarse_axes))

    @property
    def cells_per_coarse(self) -> int:
        return int(np.prod(self.coarse_block))

    @cached_property
    def coarse_cells(self) -> np.ndarray:
        """(m_c, cells_per_coarse) fine cell indices for every coarse element."""
        return _blocks(self.spec, self.n_coarse_axes)

    @cached_property
    def cc_cells(self) -> np.ndarray:
        """(m_cc, cells_per_cc) fine cell indices for every coarse-coarse element."""
        return _blocks(self.spec, self.ncc)

    @cached_property
    def cell_to_coarse(self) -> np.ndarray:
        out = np.empty(self.spec.size, dtype=np.int64)
        out[self.coarse_cells] = np.arange(self.m_c)[:, None]
        return out

    @cached_property
    def coarse_to_cc(self) -> np.ndarray:
        ncx, ncy, ncz = self.n_coarse_axes
        c = np.arange(self.m_c)
        ci, cj, ck = c % ncx, (c // ncx) % ncy, c // (ncx * ncy)
        sd = self.sd
        return (ci // sd) + self.ncc[0] * ((cj // sd) + self.ncc[1] * (ck // sd))

    @cached_property
    def coarse_of_cc(self) -> np.ndarray:
        """(m_cc, sd**3) coarse element ids inside each coarse-coarse element, ascending."""
        order = np.argsort(self.coarse_to_cc, kind="stable")
        return order.reshape(self.m_cc, self.sd**3)

    def cells_of_coarse(self, c: int) -> np.ndarray:
        if not 0 <= c < self.m_c:
            raise IndexError(f"coarse index {c} out of range [0, {self.m_c})")
        return self.coarse_cells[c]

    def cells_of_cc(self, c: int) -> np.ndarray:
        if not 0 <= c < self.m_cc:
            raise IndexError(f"coarse-coarse index {c} out of range [0, {self.m_cc})")
        return self.cc_cells[c]


def build_hierarchy(spec: GridSpec, ncc, sd: int) -> HierarchicalGrid:
    if np.isscalar(ncc):
        ncc = (int(ncc),) * 3
    ncc = tuple(int(c) for c in ncc)
    if len(ncc) != 3 or min(ncc) < 1 or int(sd) != sd or sd < 1:
        raise ConfigurationError(f"need three positive ncc values and positive integer sd, got ncc={ncc}, sd={sd}")
    for axis, n, c in zip(AXES, spec.shape_xyz, ncc):
        if n % (c * sd):
            raise ConfigurationError(
                f"n{axis}={n} is not divisible by ncc_{axis}*sd = {c}*{sd} = {c * sd}"
            )
    return HierarchicalGrid(spec, ncc, int(sd))


def interpolate_design(x_lo: np.ndarray, grid_lo: GridSpec, grid_hi: GridSpec) -> np.ndarray:
    """Piecewise-constant prolongation of a design field to a refined grid."""
    factors = []
    for n_lo, n_hi in zip(grid_lo.shape_xyz, grid_hi.shape_xyz):
        if n_hi % n_lo:
            raise ConfigurationError(f"refinement {n_lo} -> {n_hi} is not by an integer factor")
        factors.append(n_hi // n_lo)
    fx, fy, fz = factors
    x = np.asarray(x_lo, dtype=float).reshape(grid_lo.shape)
    x = np.repeat(np.repeat(np.repeat(x, fz, axis=0), fy, axis=1), fx, axis=2)
    return x.ravel()


@dataclass(frozen=True)
class DirichletPatch:
    """Axis-aligned rectangle on a domain face held at temperature ``value``.

    ``lo``/``hi`` are bounds in the two tangential coordinates, taken in
    x, y, z order with the normal axis skipped (e.g. (x, y) on a z-face).
    A boundary cell face belongs to the patch when its centre lies inside.
    """

    face: str
    lo: tuple[float, float]
    hi: tuple[float, float]
    value: float = 100.0

    def __post_init__(self):
        if self.face not in FACES:
            raise ConfigurationError(f"unknown face {self.face!r}; expected one of {FACES}")
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ConfigurationError(f"empty patch rectangle {self.lo} -> {self.hi}")

    @property
    def axis(self) -> int:
        return AXES.index(self.face[0])

    def overlaps(self, other: "DirichletPatch") -> bool:
        if self.face != other.face:
            return False
        return all(a_lo < b_hi and b_lo < a_hi for a_lo, a_hi, b_lo, b_hi in
                   zip(self.lo, self.hi, other.lo, other.hi))

    def cells(self, spec: GridSpec) -> np.ndarray:
        """Fine cells whose boundary face lies on the patch."""
        axis = self.axis
        tangential = [a for a in range(3) if a != axis]
        n = spec.shape_xyz
        h = spec.h
        masks = []
        for t, lo, hi in zip(tangential, self.lo, self.hi):
            centers = (np.arange(n[t]) + 0.5) * h[t]
            masks.append((centers >= lo) & (centers <= hi))
        layer = 0 if self.face[1] == "-" else n[axis] - 1
        sel = [None, None, None]
        sel[axis] = np.array([layer])
        sel[tangential[0]] = np.flatnonzero(masks[0])
        sel[tangential[1]] = np.flatnonzero(masks[1])
        i, j, k = np.meshgrid(sel[0], sel[1], sel[2], indexing="ij")
        return np.sort(spec.index(i, j, k).ravel())


@dataclass(frozen=True)
class BoundarySpec:
    """Dirichlet patches; every other boundary face is insulated (zero flux)."""

    dirichlet_patches: tuple[DirichletPatch, ...] = field(default_factory=tuple)

    def __post_init__(self):
        patches = tuple(self.dirichlet_patches)
        object.__setattr__(self, "dirichlet_patches", patches)
        for a in range(len(patches)):
            for b in range(a + 1, len(patches)):
                if patches[a].overlaps(patches[b]):
                    raise ConfigurationError(f"Dirichlet patches {a} and {b} overlap")

    @classmethod
    def bottom_center(cls, width: float = 0.1, value: float = 100.0, spec: GridSpec | None = None):
        lx, ly = (spec.lx, spec.ly) if spec is not None else (1.0, 1.0)
        lo = (0.5 * lx - width / 2, 0.5 * ly - width / 2)
        hi = (0.5 * lx + width / 2, 0.5 * ly + width / 2)
        return cls((DirichletPatch("z-", lo, hi, value),))

    def faces(self, spec: GridSpec) -> list[tuple[int, np.ndarray, float]]:
        """``(axis, cells, value)`` per patch; raises if no boundary cell is covered."""
        out = [(p.axis, p.cells(spec), float(p.value)) for p in self.dirichlet_patches]
        if not out or sum(len(c) for _, c, _ in out) == 0:
            raise ConfigurationError(
                "no Dirichlet boundary cell on this grid; the heat equation would be singular"
            )
        return out
