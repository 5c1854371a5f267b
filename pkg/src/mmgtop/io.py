"""Legacy VTK and CSV output."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from mmgtop.grid import GridSpec


def write_vtk(field, spec: GridSpec, path, name: str = "field") -> Path:
    """ASCII legacy VTK STRUCTURED_POINTS file with one cell scalar."""
    field = np.asarray(field, dtype=float).ravel()
    if field.size != spec.size:
        raise ValueError(f"field has {field.size} values, grid has {spec.size} cells")
    path = Path(path)
    lines = [
        "# vtk DataFile Version 3.0",
        name,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {spec.nx + 1} {spec.ny + 1} {spec.nz + 1}",
        "ORIGIN 0 0 0",
        f"SPACING {spec.hx!r} {spec.hy!r} {spec.hz!r}",
        f"CELL_DATA {spec.size}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    body = "\n".join(f"{v:.9g}" for v in field)
    path.write_text("\n".join(lines) + "\n" + body + "\n")
    return path


def read_vtk(path) -> dict:
    """Parse the files written by :func:`write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    header = {}
    pos = 0
    while pos < len(tokens):
        line = tokens[pos].strip()
        pos += 1
        if line.startswith("DIMENSIONS"):
            header["dimensions"] = tuple(int(v) for v in line.split()[1:])
        elif line.startswith("SPACING"):
            header["spacing"] = tuple(float(v) for v in line.split()[1:])
        elif line.startswith("CELL_DATA"):
            header["n"] = int(line.split()[1])
        elif line.startswith("SCALARS"):
            header["name"] = line.split()[1]
        elif line.startswith("LOOKUP_TABLE"):
            break
    values = np.array(" ".join(tokens[pos:]).split(), dtype=float)
    if values.size != header["n"]:
        raise ValueError(f"expected {header['n']} values, found {values.size}")
    header["values"] = values
    return header


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path
