"""Gapless local alignment: diagonal scan, excursions, and counts.

The score matrix is never materialised for large inputs; each diagonal
is an independent reflected walk streamed in one pass. Float scores
accumulate left to right along each diagonal, so results are
reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import ScoreModel, _readonly

SCORE_DROPPED = "ScoreDropped"
HIT_BOUNDARY = "HitBoundary"

FULL_MATRIX_LIMIT = 1000


@dataclass(frozen=True)
class Sequences:
    """Two index sequences over the model alphabet (lengths may differ)."""

    x: np.ndarray
    y: np.ndarray

    @property
    def n_x(self) -> int:
        return int(self.x.size)

    @property
    def n_y(self) -> int:
        return int(self.y.size)


def make_sequences(x, y, alphabet_size: int) -> Sequences:
    x = np.ascontiguousarray(x, dtype=np.int32)
    y = np.ascontiguousarray(y, dtype=np.int32)
    for name, arr in (("x", x), ("y", y)):
        if arr.ndim != 1:
            raise ValueError(f"sequence {name} must be one-dimensional")
        if arr.size and (arr.min() < 0 or arr.max() >= alphabet_size):
            bad = int(np.nonzero((arr < 0) | (arr >= alphabet_size))[0][0])
            raise ValueError(
                f"sequence {name} has symbol {int(arr[bad])} at position {bad}, "
                f"outside alphabet of size {alphabet_size}"
            )
    return Sequences(x=_readonly(x), y=_readonly(y))


@dataclass(frozen=True)
class Excursion:
    """One positive stretch of a diagonal of the score matrix."""

    i: int
    j: int
    delta: int
    peak: float
    end_reason: str


@dataclass(frozen=True)
class AlignmentResult:
    m_n: float
    excursions: tuple[Excursion, ...]
    n_excursions: int
    min_peak: float | None = None  # record filter; None = all recorded

    def c_of_t(self, t: float) -> int:
        """Number of excursions with peak strictly above t."""
        if self.min_peak is not None and t < self.min_peak:
            raise ValueError(
                f"records were filtered at min_peak={self.min_peak}; "
                f"counts below that are unavailable"
            )
        return sum(1 for e in self.excursions if e.peak > t)


def _check_seqs(model: ScoreModel, seqs: Sequences) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(seqs.x, dtype=np.int32)
    y = np.ascontiguousarray(seqs.y, dtype=np.int32)
    E = model.alphabet_size
    for name, arr in (("x", x), ("y", y)):
        if arr.size and (arr.min() < 0 or arr.max() >= E):
            raise ValueError(f"sequence {name} has symbols outside the model alphabet")
    return x, y


def scan_counts(model: ScoreModel, seqs: Sequences, thresholds) -> tuple[float, np.ndarray, int]:
    """Fast path: (M_n, counts of excursion peaks above each threshold,
    total excursion count) without materialising records."""
    x, y = _check_seqs(model, seqs)
    th = np.ascontiguousarray(thresholds, dtype=np.float64)
    if model.is_transition:
        m_n, counts, nexc = _kernels.scan_count_trans(x, y, model.score.table, th)
    else:
        m_n, counts, nexc = _kernels.scan_count_pair(x, y, model.score.table, th)
    return float(m_n), counts, int(nexc)


def score_matrix_scan(
    model: ScoreModel, seqs: Sequences, *, min_peak: float | None = None
) -> AlignmentResult:
    """Scan all diagonals, collecting excursions and the maximal score.

    ``min_peak`` keeps only excursion records with peak above it (the
    scan statistics are unaffected); use it to bound memory on large
    inputs where every positive stretch would otherwise be recorded.
    """
    x, y = _check_seqs(model, seqs)
    cut = -np.inf if min_peak is None else float(min_peak)
    m_n, counts, nexc = scan_counts(model, seqs, np.array([cut if np.isfinite(cut) else 0.0]))
    cap = int(counts[0]) if np.isfinite(cut) else nexc
    out_i = np.empty(cap, np.int64)
    out_j = np.empty(cap, np.int64)
    out_delta = np.empty(cap, np.int64)
    out_peak = np.empty(cap, np.float64)
    out_end = np.empty(cap, np.uint8)
    if model.is_transition:
        w = _kernels.scan_records_trans(
            x, y, model.score.table, cut, out_i, out_j, out_delta, out_peak, out_end
        )
    else:
        w = _kernels.scan_records_pair(
            x, y, model.score.table, cut, out_i, out_j, out_delta, out_peak, out_end
        )
    exc = tuple(
        Excursion(
            i=int(out_i[k]),
            j=int(out_j[k]),
            delta=int(out_delta[k]),
            peak=float(out_peak[k]),
            end_reason=SCORE_DROPPED if out_end[k] == 0 else HIT_BOUNDARY,
        )
        for k in range(w)
    )
    return AlignmentResult(
        m_n=float(m_n), excursions=exc, n_excursions=int(nexc), min_peak=min_peak
    )


def count_excesses(result: AlignmentResult, t: float) -> int:
    """C_n(t): excursions whose peak strictly exceeds t."""
    return result.c_of_t(t)


def reflected_walk(model: ScoreModel, seqs: Sequences, offset: int) -> np.ndarray:
    """T values along one diagonal (offset = x index minus y index).

    Returns the reflected walk T_1..T_L for the diagonal's interior
    cells, following the same recursion the scan uses.
    """
    x, y = _check_seqs(model, seqs)
    m, n = x.size, y.size
    if not -max(m, n) < offset < max(m, n):
        raise ValueError(f"offset {offset} out of range for lengths {m}, {n}")
    i0 = offset if offset > 0 else 0
    j0 = -offset if offset < 0 else 0
    L = max(min(m - i0, n - j0), 0)
    out = np.zeros(L)
    T = 0.0
    if model.is_transition:
        tab4 = model.score.table
        for k in range(1, L):
            T = max(T + float(tab4[x[i0 + k - 1], y[j0 + k - 1], x[i0 + k], y[j0 + k]]), 0.0)
            out[k] = T
    else:
        tab = model.score.table
        for k in range(L):
            T = max(T + float(tab[x[i0 + k], y[j0 + k]]), 0.0)
            out[k] = T
    return out


def diagonal_increments(model: ScoreModel, seqs: Sequences, offset: int) -> np.ndarray:
    """Raw per-step score increments along one diagonal (step 0 is zero
    for pair-transition scores, which need a predecessor pair)."""
    x, y = _check_seqs(model, seqs)
    m, n = x.size, y.size
    i0 = offset if offset > 0 else 0
    j0 = -offset if offset < 0 else 0
    L = max(min(m - i0, n - j0), 0)
    inc = np.zeros(L)
    if model.is_transition:
        tab4 = model.score.table
        for k in range(1, L):
            inc[k] = tab4[x[i0 + k - 1], y[j0 + k - 1], x[i0 + k], y[j0 + k]]
    else:
        tab = model.score.table
        for k in range(L):
            inc[k] = tab[x[i0 + k], y[j0 + k]]
    return inc


def full_matrix(model: ScoreModel, seqs: Sequences) -> np.ndarray:
    """The (m+1) x (n+1) score matrix, for inspection on small inputs."""
    x, y = _check_seqs(model, seqs)
    m, n = x.size, y.size
    if max(m, n) > FULL_MATRIX_LIMIT:
        raise ValueError(f"full matrix mode is limited to lengths <= {FULL_MATRIX_LIMIT}")
    T = np.zeros((m + 1, n + 1))
    if model.is_transition:
        tab4 = model.score.table
        for i in range(2, m + 1):
            for j in range(2, n + 1):
                T[i, j] = max(
                    T[i - 1, j - 1] + tab4[x[i - 2], y[j - 2], x[i - 1], y[j - 1]], 0.0
                )
    else:
        tab = model.score.table
        for i in range(1, m + 1):
            for j in range(1, n + 1):
                T[i, j] = max(T[i - 1, j - 1] + tab[x[i - 1], y[j - 1]], 0.0)
    return T
