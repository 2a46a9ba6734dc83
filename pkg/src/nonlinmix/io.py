"""Headerless CSV matrices and dataset directories.

Matrices are written row-major with 17 significant digits, which round-trips
every double exactly.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import ParseError
from .mixture import MixingMatrix, MixtureDataset, NonlinearSpec, SourceMatrix


def write_matrix(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2:
        raise ValueError("can only write 2-D arrays")
    with open(path, "w", newline="\n") as fh:
        for row in A:
            fh.write(",".join(format(float(v), ".17g") for v in row))
            fh.write("\n")


def write_table(path, A, header) -> None:
    """Plot-ready CSV with a header row; NaN cells are left empty."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in A:
            fh.write(",".join("" if np.isnan(v) else format(float(v), ".17g") for v in row))
            fh.write("\n")


def read_matrix(path) -> np.ndarray:
    """Parse a headerless numeric CSV; ``ParseError`` names the bad line."""
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(c) for c in line.split(",")]
            except ValueError:
                raise ParseError(f"non-numeric cell in {line!r}", line=lineno) from None
            if not all(np.isfinite(row)):
                raise ParseError("non-finite value", line=lineno)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"expected {width} columns, got {len(row)}", line=lineno)
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data")
    return np.array(rows, dtype=float)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from None


def save_dataset(directory, ds: MixtureDataset) -> None:
    d = Path(directory)
    os.makedirs(d, exist_ok=True)
    write_matrix(d / "X.csv", ds.X)
    if ds.A is not None:
        write_matrix(d / "A.csv", ds.A.A)
    if ds.S is not None:
        write_matrix(d / "S.csv", ds.S.S)
    if ds.phi is not None:
        write_json(d / "phi.json", ds.phi.to_json())
    meta = dict(ds.meta)
    if ds.A is not None:
        meta.setdefault("generation", ds.A.generation)
    if ds.S is not None:
        if ds.S.dirichlet_mu is not None:
            meta.setdefault("mu", [float(m) for m in ds.S.dirichlet_mu])
        if ds.S.seed is not None:
            meta.setdefault("source_seed", ds.S.seed)
    write_json(d / "meta.json", meta)


def load_dataset(directory) -> MixtureDataset:
    d = Path(directory)
    X = read_matrix(d / "X.csv")
    meta = read_json(d / "meta.json") if (d / "meta.json").exists() else {}
    A = S = phi = None
    if (d / "A.csv").exists():
        A = MixingMatrix(read_matrix(d / "A.csv"), meta.get("generation", "user-supplied"))
    if (d / "S.csv").exists():
        S = SourceMatrix(read_matrix(d / "S.csv"), meta.get("mu"), meta.get("source_seed"))
    if (d / "phi.json").exists():
        phi = NonlinearSpec.from_json(read_json(d / "phi.json"))
    return MixtureDataset(X, A, S, phi, meta)
