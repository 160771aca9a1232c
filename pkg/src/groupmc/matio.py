"""Matrix and label file formats used by the command line tools.

Two matrix formats are auto-detected:

* dense CSV: no header, one row per line, comma-separated float literals.
  A blank cell marks an unobserved entry (its value is taken as 0 and the
  cell is excluded from the derived mask).
* triplet CSV: header ``row,col,value``, one observed cell per line,
  zero-based indices. Dimensions are inferred as max index + 1.

Floats are written with 17 significant digits so values round-trip exactly.
Label files are CSV with header ``row,label`` covering rows 0..n-1.
"""

from __future__ import annotations

import csv

import numpy as np

from .observation import ObservationMask

FLOAT_FMT = ".17g"


def _fmt(v: float) -> str:
    return format(float(v), FLOAT_FMT)


def save_dense_csv(A, path) -> None:
    A = np.asarray(A, dtype=np.float64)
    with open(path, "w") as fh:
        for row in A:
            fh.write(",".join(_fmt(v) for v in row))
            fh.write("\n")


def _is_triplet_header(line: str) -> bool:
    fields = [f.strip().lower() for f in line.split(",")]
    return fields == ["row", "col", "value"]


def load_matrix(path) -> tuple[np.ndarray, ObservationMask | None]:
    """Load a matrix file, returning (X, mask).

    mask is None when every cell of a dense file is present; otherwise it
    lists the observed cells (unobserved cells of X are zero).
    """
    with open(path) as fh:
        first = fh.readline()
        if not first.strip():
            raise ValueError(f"{path}: empty matrix file")
        if _is_triplet_header(first):
            return _load_triplet(fh, path)
        return _load_dense(first, fh, path)


def _load_dense(first: str, fh, path) -> tuple[np.ndarray, ObservationMask | None]:
    rows: list[list[float]] = []
    observed: list[list[bool]] = []
    any_blank = False
    for line_no, line in enumerate([first] + fh.readlines(), start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line and line_no > 1:
            continue
        vals, obs = [], []
        for cell in line.split(","):
            cell = cell.strip()
            if cell == "":
                vals.append(0.0)
                obs.append(False)
                any_blank = True
            else:
                v = float(cell)
                if not np.isfinite(v):
                    raise ValueError(f"{path}:{line_no}: non-finite value {cell!r}")
                vals.append(v)
                obs.append(True)
        if rows and len(vals) != len(rows[0]):
            raise ValueError(f"{path}:{line_no}: ragged row "
                             f"({len(vals)} cells, expected {len(rows[0])})")
        rows.append(vals)
        observed.append(obs)
    X = np.array(rows, dtype=np.float64)
    if not any_blank:
        return X, None
    return X, ObservationMask.from_dense(np.array(observed, dtype=bool))


def _load_triplet(fh, path) -> tuple[np.ndarray, ObservationMask]:
    r, c, v = [], [], []
    for line_no, rec in enumerate(csv.reader(fh), start=2):
        if not rec:
            continue
        if len(rec) != 3:
            raise ValueError(f"{path}:{line_no}: expected row,col,value")
        i, j, val = int(rec[0]), int(rec[1]), float(rec[2])
        if i < 0 or j < 0:
            raise ValueError(f"{path}:{line_no}: negative index")
        if not np.isfinite(val):
            raise ValueError(f"{path}:{line_no}: non-finite value")
        r.append(i)
        c.append(j)
        v.append(val)
    if not r:
        raise ValueError(f"{path}: triplet file lists no cells")
    n, m = max(r) + 1, max(c) + 1
    X = np.zeros((n, m))
    X[r, c] = v
    return X, ObservationMask.from_pairs(n, m, r, c)


def save_labels_csv(labels, path) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "label"])
        for i, v in enumerate(labels.tolist()):
            writer.writerow([i, v])


def load_labels_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["row", "label"]:
            raise ValueError(f"{path}: expected header 'row,label'")
        pairs = []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise ValueError(f"{path}:{line_no}: expected two fields")
            pairs.append((int(rec[0]), int(rec[1])))
    if not pairs:
        raise ValueError(f"{path}: no labels")
    n = max(p[0] for p in pairs) + 1
    out = np.full(n, -1, dtype=np.int64)
    for i, v in pairs:
        out[i] = v
    if (out < 0).any():
        missing = int(np.flatnonzero(out < 0)[0])
        raise ValueError(f"{path}: row {missing} has no label")
    return out
