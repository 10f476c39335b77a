"""Synthetic minority oversampling.

New minority rows are drawn on the segment between an existing minority
row and one of its k nearest minority neighbours. Every synthetic row logs
which pair produced it and where on the segment it sits, so a run can be
replayed and audited after the fact.

Neighbour distance is plain Euclidean on the matrix as given; callers are
expected to hand in normalized features so large-magnitude columns do not
swamp the geometry.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .flows import ATTACK


class TooFewMinority(ValueError):
    """Interpolation needs at least two minority rows."""


@dataclass(frozen=True)
class SmoteConfig:
    """target_count is the minority size after synthesis; k bounds the
    neighbour pool per base row; seed pins the draws."""

    target_count: int
    k: int = 5
    seed: Optional[int] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.target_count < 0:
            raise ValueError(f"target_count must be >= 0, got {self.target_count}")


@dataclass
class SmoteResult:
    """Synthetic rows plus the recipe for each one.

    base_idx / neighbor_idx index into the minority matrix, so
    minority[base] + gap * (minority[neighbor] - minority[base]) rebuilds
    each synthetic row exactly.
    """

    synthetic: np.ndarray
    base_idx: np.ndarray
    neighbor_idx: np.ndarray
    gap: np.ndarray
    k_used: int

    @property
    def n_synthetic(self) -> int:
        return int(self.base_idx.size)


def minority_class(y: np.ndarray) -> int:
    """The rarer label; ties go to the attack class."""
    y = np.asarray(y)
    n_attack = int(np.count_nonzero(y == ATTACK))
    return ATTACK if n_attack <= y.size - n_attack else 1 - ATTACK


def synthetic_count(n_minority: int, n_total: int, target_ratio: float) -> int:
    """How many synthetic minority rows lift the minority share to
    target_ratio of the grown total. Never negative."""
    if not 0.0 < target_ratio < 1.0:
        raise ValueError(f"target_ratio must be in (0, 1), got {target_ratio}")
    raw = (target_ratio * n_total - n_minority) / (1.0 - target_ratio)
    return max(0, round(raw))


def _nearest_neighbors(minority: np.ndarray, k: int) -> np.ndarray:
    """(n, k) neighbour table by Euclidean distance, self excluded,
    distance ties broken toward the lower row index."""
    n = minority.shape[0]
    sq = np.einsum("ij,ij->i", minority, minority)
    table = np.empty((n, k), dtype=np.int64)
    block = max(1, min(n, 8_388_608 // max(1, n)))
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        d = sq[lo:hi, None] + sq[None, :] - 2.0 * (minority[lo:hi] @ minority.T)
        np.maximum(d, 0.0, out=d)
        d[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        order = np.argsort(d, axis=1, kind="stable")
        table[lo:hi] = order[:, :k]
    return table


def smote(minority: np.ndarray, config: SmoteConfig, rng=None) -> SmoteResult:
    """Grow a minority matrix of M rows to config.target_count rows,
    returning only the target_count - M synthetic ones.

    Base rows are assigned round-robin over the minority set, with the
    remainder drawn uniformly without replacement. Each synthetic row
    interpolates from its base toward one of the base's k nearest
    neighbours at a uniform random fraction of the gap.
    """
    minority = np.asarray(minority, dtype=np.float64)
    if minority.ndim != 2:
        raise ValueError(f"minority must be 2-d, got shape {minority.shape}")
    m = minority.shape[0]
    n_synth = config.target_count - m
    if n_synth < 0:
        raise ValueError(
            f"target_count {config.target_count} is below the current "
            f"minority size {m}"
        )
    empty = np.empty(0, dtype=np.int64)
    if n_synth == 0:
        return SmoteResult(
            np.empty((0, minority.shape[1])), empty, empty, np.empty(0), config.k
        )
    if m < 2:
        raise TooFewMinority(f"minority class has {m} row(s); need at least 2")
    k = config.k
    if k > m - 1:
        k = m - 1
        warnings.warn(
            f"k={config.k} exceeds available neighbours; clamped to {k}",
            stacklevel=2,
        )
    if rng is None:
        rng = np.random.default_rng(config.seed)

    q, r = divmod(n_synth, m)
    bases = np.tile(np.arange(m), q)
    if r:
        bases = np.concatenate([bases, rng.choice(m, size=r, replace=False)])

    table = _nearest_neighbors(minority, k)
    pick = rng.integers(0, k, size=n_synth)
    gaps = rng.random(n_synth)
    neighbors = table[bases, pick]
    synth = minority[bases] + gaps[:, None] * (minority[neighbors] - minority[bases])
    return SmoteResult(synth, bases.astype(np.int64), neighbors, gaps, k)


def replay(minority: np.ndarray, result: SmoteResult) -> np.ndarray:
    """Rebuild the synthetic rows from provenance; equality with the stored
    rows proves the log is faithful. Works against any matrix with the same
    row indexing, which is how raw-space rows are materialized after a
    normalized-space neighbour search."""
    minority = np.asarray(minority, dtype=np.float64)
    base = minority[result.base_idx]
    neigh = minority[result.neighbor_idx]
    return base + result.gap[:, None] * (neigh - base)


def augment_training_set(
    x: np.ndarray,
    y: np.ndarray,
    target_ratio: float = 0.10,
    k: int = 5,
    seed=None,
) -> Tuple[np.ndarray, np.ndarray, SmoteResult]:
    """Oversample the minority class of a training set until it holds
    target_ratio of the grown total; pass-through if already there."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError(f"shape mismatch: x {x.shape}, y {y.shape}")
    mino = minority_class(y)
    rows = np.flatnonzero(y == mino)
    need = synthetic_count(int(rows.size), int(y.size), target_ratio)
    rng = np.random.default_rng(seed)
    result = smote(x[rows], SmoteConfig(target_count=int(rows.size) + need, k=k), rng)
    if result.n_synthetic == 0:
        return x, y, result
    x_out = np.concatenate([x, result.synthetic])
    y_out = np.concatenate([y, np.full(result.n_synthetic, mino, dtype=np.int64)])
    return x_out, y_out, result


PROVENANCE_CSV_HEADER = "base_idx,neighbor_idx,gap"


def write_provenance_csv(result: SmoteResult, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(PROVENANCE_CSV_HEADER + "\n")
        for b, n, g in zip(result.base_idx, result.neighbor_idx, result.gap):
            f.write(f"{int(b)},{int(n)},{float(g)!r}\n")


def read_provenance_csv(path) -> List[Tuple[int, int, float]]:
    out: List[Tuple[int, int, float]] = []
    with open(path, "r", newline="") as f:
        header = f.readline().rstrip("\r\n")
        if header != PROVENANCE_CSV_HEADER:
            raise ValueError(f"expected header {PROVENANCE_CSV_HEADER!r}")
        for raw in f:
            raw = raw.rstrip("\r\n")
            if not raw:
                continue
            b, n, g = raw.split(",")
            out.append((int(b), int(n), float(g)))
    return out
