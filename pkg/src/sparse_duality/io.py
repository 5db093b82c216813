"""Plain-text problem files.

Matrices are CSV with a ``rows,cols`` first line followed by one row per
line. Vectors are one value per line. Labeled designs are CSV rows of
features with the 0/1 label last; a non-numeric first line is treated as a
header. Floats are written with ``repr`` so values round-trip exactly.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .classifier import LabeledDesign


class InputFormatError(ValueError):
    """A problem file could not be parsed."""


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]


def _floats(row, path, lineno):
    try:
        return [float(c) for c in row]
    except ValueError as exc:
        raise InputFormatError(f"{path}:{lineno}: non-numeric entry ({exc})") from None


def read_matrix(path) -> np.ndarray:
    rows = _rows(path)
    if not rows:
        raise InputFormatError(f"{path}: empty matrix file")
    try:
        n, m = (int(v) for v in rows[0])
    except ValueError:
        raise InputFormatError(f"{path}:1: expected 'rows,cols' header") from None
    if len(rows) - 1 != n:
        raise InputFormatError(f"{path}: header says {n} rows, found {len(rows) - 1}")
    data = [_floats(r, path, i + 2) for i, r in enumerate(rows[1:])]
    if any(len(r) != m for r in data):
        raise InputFormatError(f"{path}: every row must have {m} entries")
    return np.array(data, dtype=float).reshape(n, m)


def write_matrix(path, matrix) -> None:
    mat = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(mat.shape)
        for row in mat:
            writer.writerow([repr(float(v)) for v in row])


def read_vector(path) -> np.ndarray:
    rows = _rows(path)
    if any(len(r) != 1 for r in rows):
        raise InputFormatError(f"{path}: vectors must have one value per line")
    return np.array([_floats(r, path, i + 1)[0] for i, r in enumerate(rows)], dtype=float)


def write_vector(path, vec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in np.asarray(vec, dtype=float).reshape(-1):
            fh.write(repr(float(v)) + "\n")


def read_labeled_design(path) -> LabeledDesign:
    rows = _rows(path)
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise InputFormatError(f"{path}: no data rows")
    data = [_floats(r, path, i + 1) for i, r in enumerate(rows)]
    width = len(data[0])
    if width < 2 or any(len(r) != width for r in data):
        raise InputFormatError(f"{path}: rows need equal length with at least one feature")
    arr = np.array(data)
    try:
        return LabeledDesign(arr[:, :-1], arr[:, -1])
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from None


def read_features(path) -> np.ndarray:
    """Feature rows without labels (header line optional)."""
    rows = _rows(path)
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    data = [_floats(r, path, i + 1) for i, r in enumerate(rows)]
    if not data or any(len(r) != len(data[0]) for r in data):
        raise InputFormatError(f"{path}: rows need equal length")
    return np.array(data, dtype=float)


def model_to_dict(x, gamma, **meta) -> dict:
    x = np.asarray(x, dtype=float)
    return {"support": np.flatnonzero(x).tolist(), "weights": x.tolist(),
            "gamma": np.asarray(gamma, dtype=float).tolist(), **meta}


def load_model(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        model = json.load(fh)
    if "weights" not in model:
        raise InputFormatError(f"{path}: model JSON lacks 'weights'")
    return model


__all__ = ["InputFormatError", "read_matrix", "write_matrix", "read_vector", "write_vector",
           "read_labeled_design", "read_features", "model_to_dict", "load_model"]
