"""Observation masks and the masking regimes used for benchmarks.

A mask is the set of observed (row, col) cells of an n-by-m matrix, stored as
sorted unique row-major linear indices with a lazily built dense boolean view.
All randomness flows through seeded counter-based Philox generators, so masks
are reproducible across platforms.
"""

from __future__ import annotations

import csv

import numpy as np

from .linalg import as_matrix


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


class ObservationMask:
    """Binary observation mask over an n-by-m grid."""

    def __init__(self, rows: int, cols: int, linear_idx):
        if rows < 1 or cols < 1:
            raise ValueError("mask dimensions must be positive")
        idx = np.unique(np.asarray(linear_idx, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= rows * cols):
            raise ValueError("mask index out of range")
        self.rows = int(rows)
        self.cols = int(cols)
        self.idx = idx
        self._dense: np.ndarray | None = None

    @classmethod
    def from_pairs(cls, rows: int, cols: int, row_idx, col_idx) -> "ObservationMask":
        r = np.asarray(row_idx, dtype=np.int64)
        c = np.asarray(col_idx, dtype=np.int64)
        if r.shape != c.shape:
            raise ValueError("row/col index arrays must have equal length")
        if r.size and (r.min() < 0 or r.max() >= rows):
            raise ValueError("row index out of range")
        if c.size and (c.min() < 0 or c.max() >= cols):
            raise ValueError("col index out of range")
        return cls(rows, cols, r * cols + c)

    @classmethod
    def full(cls, rows: int, cols: int) -> "ObservationMask":
        return cls(rows, cols, np.arange(rows * cols, dtype=np.int64))

    @classmethod
    def empty(cls, rows: int, cols: int) -> "ObservationMask":
        return cls(rows, cols, np.empty(0, dtype=np.int64))

    @classmethod
    def from_dense(cls, observed) -> "ObservationMask":
        obs = np.asarray(observed, dtype=bool)
        if obs.ndim != 2:
            raise ValueError("dense mask must be 2-D")
        return cls(obs.shape[0], obs.shape[1], np.flatnonzero(obs))

    @property
    def n_observed(self) -> int:
        return int(self.idx.size)

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(row_indices, col_indices) in row-major order."""
        return self.idx // self.cols, self.idx % self.cols

    def dense(self) -> np.ndarray:
        """Dense boolean view, built once and cached."""
        if self._dense is None:
            d = np.zeros(self.rows * self.cols, dtype=bool)
            d[self.idx] = True
            self._dense = d.reshape(self.rows, self.cols)
        return self._dense

    def __eq__(self, other) -> bool:
        return (isinstance(other, ObservationMask)
                and self.rows == other.rows and self.cols == other.cols
                and np.array_equal(self.idx, other.idx))

    def __repr__(self) -> str:
        return (f"ObservationMask({self.rows}x{self.cols}, "
                f"{self.n_observed} observed)")


def project_observed(mask: ObservationMask, A) -> np.ndarray:
    """Zero all entries of A outside the observed set."""
    A = as_matrix(A, "A")
    if A.shape != (mask.rows, mask.cols):
        raise ValueError(f"shape mismatch: matrix {A.shape} vs mask "
                         f"({mask.rows}, {mask.cols})")
    return np.where(mask.dense(), A, 0.0)


def sample_uniform_mask(rows: int, cols: int, keep_prob: float,
                        seed: int) -> ObservationMask:
    """Keep each cell independently with probability `keep_prob`."""
    if not 0.0 <= keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in [0, 1], got {keep_prob}")
    draws = _rng(seed).random(rows * cols)
    return ObservationMask(rows, cols, np.flatnonzero(draws < keep_prob))


def mask_block_rows(base: ObservationMask, target_rows, drop_prob: float,
                    seed: int) -> ObservationMask:
    """Drop observed cells in `target_rows` independently with `drop_prob`.

    Cells outside the target rows are untouched. This is the block-wise
    missingness regime: extra masking concentrated on a row subgroup.
    """
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError(f"drop_prob must be in [0, 1], got {drop_prob}")
    target = np.unique(np.asarray(target_rows, dtype=np.int64))
    if target.size and (target[0] < 0 or target[-1] >= base.rows):
        raise ValueError("target row index out of range")
    rows_of = base.idx // base.cols
    in_target = np.isin(rows_of, target)
    drops = np.zeros(base.idx.size, dtype=bool)
    n_target = int(in_target.sum())
    if n_target:
        drops[in_target] = _rng(seed).random(n_target) < drop_prob
    return ObservationMask(base.rows, base.cols, base.idx[~drops])


def split_holdout(mask: ObservationMask, test_frac: float,
                  seed: int) -> tuple[ObservationMask, ObservationMask]:
    """Partition a mask into disjoint train/test masks.

    |test| = round(test_frac * |mask|); the split is a seeded permutation of
    the observed cells, so it is deterministic per seed.
    """
    if not 0.0 < test_frac < 1.0:
        raise ValueError(f"test_frac must be in (0, 1), got {test_frac}")
    n_test = int(round(test_frac * mask.n_observed))
    perm = _rng(seed).permutation(mask.idx.size)
    test_idx = mask.idx[perm[:n_test]]
    train_idx = mask.idx[perm[n_test:]]
    return (ObservationMask(mask.rows, mask.cols, train_idx),
            ObservationMask(mask.rows, mask.cols, test_idx))


def save_mask_csv(mask: ObservationMask, path) -> None:
    """Write a mask as CSV with header row,col (zero-based, row-major order)."""
    r, c = mask.pairs()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col"])
        for i, j in zip(r.tolist(), c.tolist()):
            writer.writerow([i, j])


def load_mask_csv(path, rows: int, cols: int) -> ObservationMask:
    """Read a row,col CSV into a mask over a rows-by-cols grid."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["row", "col"]:
            raise ValueError(f"{path}: expected header 'row,col'")
        r, c = [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise ValueError(f"{path}:{line_no}: expected two fields")
            r.append(int(rec[0]))
            c.append(int(rec[1]))
    return ObservationMask.from_pairs(rows, cols, r, c)
