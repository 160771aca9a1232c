"""Overlapping row categories: selection operators, multiplicities, penalty weights.

A category c is a named set of row indices I_c. Categories may overlap; every
row must belong to at least one category (the cover requirement), since an
uncovered row receives no penalty and is unidentifiable from the regularizer's
point of view. Row selection D_c (extract) and its adjoint (embed) are
semi-orthogonal: extracting after embedding is the identity on submatrices.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_matrix
from .observation import ObservationMask

CATCHALL_ID = "__uncovered__"


class CoverageError(ValueError):
    """Some row belongs to no category."""


def cover_multiplicities(n: int, row_sets) -> np.ndarray:
    """Per-row category counts kappa(i); raises CoverageError if a row is uncovered."""
    kappa = np.zeros(n, dtype=np.int64)
    for rows in row_sets:
        kappa[rows] += 1
    uncovered = np.flatnonzero(kappa == 0)
    if uncovered.size:
        raise CoverageError(
            f"row {uncovered[0]} is not covered by any category "
            f"({uncovered.size} uncovered rows total)")
    return kappa


def normalize_weights(raw) -> np.ndarray:
    """Normalize nonnegative raw weights to sum to one."""
    w = np.asarray(raw, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("weights must be a 1-D sequence")
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must not all be zero")
    return w / total


@dataclass(frozen=True)
class GroupStructure:
    """Immutable overlapping category structure over n rows.

    ids: category names, ordered by first appearance.
    rows: per-category sorted row-index arrays (each nonempty, indices < n).
    weights: convex weights alpha_c (sum to one).
    kappa: per-row multiplicity, computed eagerly at construction.
    """

    n: int
    ids: tuple[str, ...]
    rows: tuple[np.ndarray, ...]
    weights: np.ndarray
    kappa: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, n: int, categories, raw_weights=None,
              allow_uncovered: bool = False) -> "GroupStructure":
        """Construct and validate a structure.

        categories: iterable of (id, row-index iterable). With
        allow_uncovered=True, rows outside every category are collected into
        a synthetic catch-all category instead of raising.
        """
        if n < 1:
            raise ValueError("n must be positive")
        ids: list[str] = []
        row_sets: list[np.ndarray] = []
        for cid, rws in categories:
            cid = str(cid)
            if cid in ids:
                raise ValueError(f"duplicate category id {cid!r}")
            rows = np.unique(np.asarray(list(rws), dtype=np.int64))
            if rows.size == 0:
                raise ValueError(f"category {cid!r} is empty")
            if rows[0] < 0 or rows[-1] >= n:
                raise ValueError(f"category {cid!r} has row index out of range")
            ids.append(cid)
            row_sets.append(rows)
        if not ids:
            raise ValueError("at least one category is required")
        if allow_uncovered:
            seen = np.zeros(n, dtype=bool)
            for rows in row_sets:
                seen[rows] = True
            rest = np.flatnonzero(~seen)
            if rest.size:
                ids.append(CATCHALL_ID)
                row_sets.append(rest)
        kappa = cover_multiplicities(n, row_sets)
        if raw_weights is None:
            weights = np.full(len(ids), 1.0 / len(ids))
        else:
            if len(raw_weights) == len(ids) - 1 and allow_uncovered and ids[-1] == CATCHALL_ID:
                raw_weights = list(raw_weights) + [float(np.mean(raw_weights))]
            if len(raw_weights) != len(ids):
                raise ValueError("one raw weight per category required")
            weights = normalize_weights(raw_weights)
        return cls(n=n, ids=tuple(ids), rows=tuple(row_sets),
                   weights=weights, kappa=kappa)

    @classmethod
    def from_labels(cls, labels, prefix: str = "g", **kwargs) -> "GroupStructure":
        """Disjoint structure from an integer label vector (one category per label)."""
        labels = np.asarray(labels, dtype=np.int64)
        cats = [(f"{prefix}{v}", np.flatnonzero(labels == v))
                for v in np.unique(labels)]
        return cls.build(labels.size, cats, **kwargs)

    def __len__(self) -> int:
        return len(self.ids)

    def index_of(self, category_id: str) -> int:
        try:
            return self.ids.index(category_id)
        except ValueError:
            raise KeyError(f"unknown category {category_id!r}") from None

    def sizes(self) -> np.ndarray:
        return np.array([r.size for r in self.rows], dtype=np.int64)

    def with_weights(self, raw_weights) -> "GroupStructure":
        return GroupStructure(n=self.n, ids=self.ids, rows=self.rows,
                              weights=normalize_weights(raw_weights),
                              kappa=self.kappa)


def validate_cover(g: GroupStructure) -> tuple[int, int]:
    """Recompute multiplicities and return (kappa_min, kappa_max)."""
    kappa = cover_multiplicities(g.n, g.rows)
    return int(kappa.min()), int(kappa.max())


def extract_rows(g: GroupStructure, category_id: str, W) -> np.ndarray:
    """Submatrix W_c = rows I_c of W, in I_c order (the action of D_c)."""
    W = as_matrix(W, "W")
    if W.shape[0] != g.n:
        raise ValueError(f"W has {W.shape[0]} rows, structure expects {g.n}")
    return W[g.rows[g.index_of(category_id)]].copy()


def embed_rows(g: GroupStructure, category_id: str, B) -> np.ndarray:
    """n-by-m matrix with rows I_c taken from B and zeros elsewhere (D_c^T)."""
    B = as_matrix(B, "B")
    rows = g.rows[g.index_of(category_id)]
    if B.shape[0] != rows.size:
        raise ValueError(f"B has {B.shape[0]} rows, category has {rows.size}")
    out = np.zeros((g.n, B.shape[1]))
    out[rows] = B
    return out


def lambda_heuristic(g: GroupStructure, mask: ObservationMask, sigma: float,
                     subexp_scale: float = 0.0, scale: float = 1.0) -> dict[str, float]:
    """Noise-calibrated per-category penalty levels.

    For each category, the penalty scales with the noise level sigma, the
    expected per-category sample budget N * n_c / n under uniform sampling
    (N = number of observed cells), and the local dimension d_c = n_c + m:

        lambda_c = scale * [ (sigma / kappa_min) *
                             sqrt( (N n_c / n) * log(d_c) / min(n_c, m) )
                             + subexp_scale * log(d_c) / kappa_min ]

    The second term covers heavy (subexponential) noise tails and vanishes
    for subexp_scale = 0. Smaller or more sparsely covered categories get
    proportionally stronger regularization.
    """
    if sigma < 0 or subexp_scale < 0:
        raise ValueError("sigma and subexp_scale must be nonnegative")
    if scale <= 0:
        raise ValueError("scale must be positive")
    if mask.n_observed == 0:
        raise ValueError("mask has no observed cells")
    if mask.rows != g.n:
        raise ValueError(f"mask has {mask.rows} rows, structure expects {g.n}")
    n_obs = mask.n_observed
    m = mask.cols
    kappa_min = int(g.kappa.min())
    out: dict[str, float] = {}
    for cid, rows in zip(g.ids, g.rows):
        n_c = rows.size
        d_c = n_c + m
        gauss = (sigma / kappa_min) * math.sqrt(
            (n_obs * n_c / g.n) * math.log(d_c) / min(n_c, m))
        tail = subexp_scale * math.log(d_c) / kappa_min
        out[cid] = scale * (gauss + tail)
    return out


def weights_from_lambdas(lambdas: dict[str, float]) -> tuple[float, np.ndarray]:
    """Collapse per-category penalties to (global lambda, convex weights).

    lam = sum of lambda_c and alpha_c = lambda_c / lam, so that
    lam * alpha_c recovers each lambda_c.
    """
    vals = np.array([float(v) for v in lambdas.values()])
    if (vals < 0).any():
        raise ValueError("per-category penalties must be nonnegative")
    total = float(vals.sum())
    if total == 0.0:
        return 0.0, np.full(vals.size, 1.0 / vals.size)
    return total, vals / total


def save_groups_csv(g: GroupStructure, path) -> None:
    """Write a structure as CSV with header row,category (one line per membership)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "category"])
        for cid, rows in zip(g.ids, g.rows):
            for i in rows.tolist():
                writer.writerow([i, cid])


def load_groups_csv(path, n: int, raw_weights=None,
                    allow_uncovered: bool = False) -> GroupStructure:
    """Read a row,category CSV; category order is fixed by first appearance."""
    order: list[str] = []
    members: dict[str, list[int]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["row", "category"]:
            raise ValueError(f"{path}: expected header 'row,category'")
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise ValueError(f"{path}:{line_no}: expected two fields")
            row, cid = int(rec[0]), rec[1].strip()
            if cid not in members:
                order.append(cid)
                members[cid] = []
            members[cid].append(row)
    return GroupStructure.build(n, [(cid, members[cid]) for cid in order],
                                raw_weights=raw_weights,
                                allow_uncovered=allow_uncovered)
