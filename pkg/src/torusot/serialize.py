"""Deterministic file I/O: CSV and JSON writers, measure loading, gnuplot data.

Floats are rendered with repr (shortest round-trip form), so identical
inputs always produce byte-identical files; no timestamps are written.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .kantorovich import DiscreteMeasure, PotentialPair, TransportPlan


def fmt(x) -> str:
    return repr(float(x))


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_matrix_csv(path, matrix) -> None:
    matrix = np.atleast_2d(matrix)
    with open(path, "w") as fh:
        for row in matrix:
            fh.write(",".join(fmt(x) for x in row))
            fh.write("\n")


def load_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_measure_csv(path, measure: DiscreteMeasure) -> None:
    """One row per atom: x1[,x2],weight."""
    with open(path, "w") as fh:
        for atom, w in zip(measure.atoms, measure.weights):
            cols = [fmt(c) for c in atom] + [fmt(w)]
            fh.write(",".join(cols) + "\n")


def load_measure_csv(path) -> DiscreteMeasure:
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    if rows.shape[1] not in (2, 3):
        raise ValueError("measure CSV needs columns x1[,x2],weight")
    return DiscreteMeasure(atoms=rows[:, :-1], weights=rows[:, -1])


def write_plan_csv(path, plan: TransportPlan, mass_tol: float = 1e-15) -> None:
    """Support entries only: i,j,mass."""
    with open(path, "w") as fh:
        fh.write("i,j,mass\n")
        for i, j in plan.support(mass_tol):
            fh.write(f"{i},{j},{fmt(plan.coupling[i, j])}\n")


def write_potentials_json(path, pair: PotentialPair) -> None:
    write_json(path, {"phi0": [float(x) for x in pair.phi0],
                      "phi1": [float(x) for x in pair.phi1]})


def write_field_csv(path, points, values) -> None:
    """Node coords then value, one node per row."""
    points = np.atleast_2d(points)
    with open(path, "w") as fh:
        for p, v in zip(points, values):
            fh.write(",".join(fmt(c) for c in p) + "," + fmt(v) + "\n")


def write_gnuplot_matrix(path, row_coords, col_coords, values) -> None:
    """Nonuniform-matrix format: first row holds column coordinates."""
    values = np.atleast_2d(values)
    with open(path, "w") as fh:
        fh.write(" ".join([str(values.shape[1])]
                          + [fmt(c) for c in col_coords]) + "\n")
        for rc, row in zip(row_coords, values):
            fh.write(" ".join([fmt(rc)] + [fmt(x) for x in row]) + "\n")


def write_series_csv(path, header_cols, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header_cols) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) if isinstance(x, float) else str(x)
                              for x in row) + "\n")


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
