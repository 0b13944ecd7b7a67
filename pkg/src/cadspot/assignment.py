"""Hungarian assignment, mask IoU, matrix-NMS and its sparse counterpart."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ._validation import check_option, check_positive

NMS_KERNELS = ("gaussian", "linear")


# ---------------------------------------------------------------------------
# Hungarian

def _hungarian_square(a: np.ndarray):
    """O(n^3) shortest augmenting path with potentials on a square matrix.

    Returns ``(col_of_row, u, v)`` where ``a[i, j] - u[i] - v[j] >= 0`` and
    equality holds on the matching.
    """
    n = a.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def _lexicographic_optimum(a, col_of_row, u, v, tol):
    """Rewrite an optimal matching into the lexicographically smallest one.

    Works on the equality subgraph of the optimal duals: every perfect
    matching there is optimal, so rows are fixed in order to their smallest
    reachable tight column by alternating-path swaps among later rows.
    """
    n = a.shape[0]
    tight = (a - u[:, None] - v[None, :]) <= tol
    row_of_col = np.empty(n, dtype=np.int64)
    row_of_col[col_of_row] = np.arange(n)
    fixed_col = np.zeros(n, dtype=bool)
    for i in range(n):
        target = col_of_row[i]
        for c in np.flatnonzero(tight[i] & ~fixed_col):
            if c == target:
                break
            # Re-seat the current owner of c elsewhere so that col ``target`` frees up.
            path = _alternating_path(int(row_of_col[c]), int(c), int(target), i, tight, fixed_col, row_of_col)
            if path is None:
                continue
            for r, new_c in path:
                col_of_row[r] = new_c
                row_of_col[new_c] = r
            col_of_row[i] = c
            row_of_col[c] = i
            break
        fixed_col[col_of_row[i]] = True
    return col_of_row


def _alternating_path(start_row, banned_col, goal_col, pivot_row, tight, fixed_col, row_of_col):
    n = tight.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[banned_col] = True
    # iterative DFS; each frame is (row, iterator over candidate cols)
    stack = [(start_row, iter(np.flatnonzero(tight[start_row] & ~fixed_col)))]
    chosen: list[tuple[int, int]] = []
    while stack:
        row, it = stack[-1]
        advanced = False
        for c in it:
            c = int(c)
            if seen[c]:
                continue
            seen[c] = True
            if c == goal_col:
                return chosen + [(row, c)]
            nxt = int(row_of_col[c])
            if nxt == pivot_row:
                continue
            chosen.append((row, c))
            stack.append((nxt, iter(np.flatnonzero(tight[nxt] & ~fixed_col))))
            advanced = True
            break
        if not advanced:
            stack.pop()
            if chosen:
                chosen.pop()
    return None


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment of ``min(R, C)`` (row, col) pairs.

    Rectangular inputs are padded to square with a constant. Among optimal
    assignments the lexicographically smallest row-ordered pair list is
    returned, so ties resolve identically on every platform for integer
    costs.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    R, C = cost.shape
    if R == 0 or C == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    n = max(R, C)
    # any constant works for padding; zero adds no rounding to real costs
    a = np.zeros((n, n))
    a[:R, :C] = cost
    col_of_row, u, v = _hungarian_square(a)
    tol = 1e-12 * n * (1.0 + float(np.abs(a).max()))
    canon = _lexicographic_optimum(a, col_of_row.copy(), u, v, tol)
    # near-ties inside tol must never trade optimality for order
    if _real_cost(cost, canon) <= _real_cost(cost, col_of_row):
        col_of_row = canon
    return [(r, int(col_of_row[r])) for r in range(R) if col_of_row[r] < C]


def _real_cost(cost: np.ndarray, col_of_row: np.ndarray) -> float:
    # padded cells cost the same constant in every perfect matching
    R, C = cost.shape
    return math.fsum(cost[r, col_of_row[r]] for r in range(R) if col_of_row[r] < C)


def assignment_cost(cost, pairs) -> float:
    cost = np.asarray(cost, dtype=float)
    return float(sum(cost[r, c] for r, c in pairs))


# ---------------------------------------------------------------------------
# IoU

def mask_iou(a, b) -> float:
    """``|a & b| / |a | b|`` for two primitive-id sets."""
    a, b = set(int(x) for x in a), set(int(x) for x in b)
    union = len(a | b)
    if union == 0:
        raise ValueError("IoU of two empty masks is undefined")
    return len(a & b) / union


@dataclass(frozen=True, eq=False)
class SparseIoUMatrix:
    """Upper-triangular CSR matrix of pairwise mask IoU.

    Only pairs ``i < j`` sharing at least one primitive are stored; the
    diagonal is omitted. ``areas`` are the binary mask sizes.
    """

    matrix: sp.csr_matrix
    areas: np.ndarray

    @property
    def n_proposals(self) -> int:
        return self.matrix.shape[0]

    @property
    def stored_pairs(self) -> int:
        return int(self.matrix.nnz)

    @property
    def dense_pairs(self) -> int:
        n = self.n_proposals
        return n * (n - 1) // 2

    def pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def incidence_matrix(masks: Sequence[np.ndarray], n_primitives: int | None = None) -> sp.csr_matrix:
    """Binary proposal x primitive matrix from primitive-id masks."""
    lengths = np.array([len(m) for m in masks], dtype=np.int64)
    cols = np.concatenate([np.asarray(m, dtype=np.int64) for m in masks]) if len(masks) else np.zeros(0, np.int64)
    n = int(n_primitives if n_primitives is not None else (cols.max() + 1 if len(cols) else 0))
    indptr = np.concatenate([[0], np.cumsum(lengths)])
    data = np.ones(len(cols), dtype=np.int64)
    out = sp.csr_matrix((data, cols, indptr), shape=(len(masks), n))
    out.sum_duplicates()
    out.data[:] = 1
    return out


def build_sparse_iou(masks: Sequence[np.ndarray], n_primitives: int | None = None) -> SparseIoUMatrix:
    """Sparse IoU over all proposal pairs that share a primitive.

    The intersection counts come from one sparse product of the incidence
    matrix with its transpose, so pairs from windows that never share a
    primitive are never touched.
    """
    B = incidence_matrix(masks, n_primitives)
    areas = np.asarray(B.sum(axis=1)).ravel().astype(np.int64)
    inter = sp.triu(B @ B.T, k=1).tocoo()
    keep = inter.data > 0
    r, c, i = inter.row[keep], inter.col[keep], inter.data[keep].astype(np.int64)
    iou = i / (areas[r] + areas[c] - i)
    mat = sp.csr_matrix((iou, (r, c)), shape=(len(masks), len(masks)))
    return SparseIoUMatrix(mat, areas)


# ---------------------------------------------------------------------------
# NMS

@dataclass(frozen=True, eq=False)
class NMSResult:
    """Surviving proposal indices (decayed-score order) and decayed scores for all inputs."""

    keep: np.ndarray
    scores: np.ndarray


def _score_order(scores: np.ndarray) -> np.ndarray:
    # score descending, input index ascending on ties
    return np.lexsort((np.arange(len(scores)), -scores))


def _keep_order(decayed: np.ndarray, threshold: float) -> np.ndarray:
    order = _score_order(decayed)
    return order[decayed[order] >= threshold]


def matrix_nms(masks: Sequence[np.ndarray], labels, scores, sigma: float = 2.0, kernel: str = "gaussian",
               score_threshold: float = 0.5) -> NMSResult:
    """Class-aware matrix NMS computed densely.

    Each proposal's score is multiplied by the smallest decay factor
    ``f(iou_ij) / f(cmax_i)`` over higher-scored proposals ``i`` of the same
    class, where ``cmax_i`` is the largest IoU of ``i`` with anything scored
    above it. ``f(x) = exp(-x^2 / sigma)`` (gaussian) or ``1 - x`` (linear).
    """
    check_option(kernel, NMS_KERNELS, "kernel")
    check_positive(sigma, "sigma")
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    P = len(scores)
    if P == 0:
        return NMSResult(np.zeros(0, np.int64), np.zeros(0))
    order = _score_order(scores)
    used = np.unique(np.concatenate([np.asarray(m, dtype=np.int64) for m in masks]))
    col = {int(pid): k for k, pid in enumerate(used)}
    dense = np.zeros((P, len(used)))
    for row, idx in enumerate(order):
        for pid in masks[idx]:
            dense[row, col[int(pid)]] = 1.0
    inter = dense @ dense.T
    area = dense.sum(axis=1)
    union = area[:, None] + area[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    lab = labels[order]
    same = lab[:, None] == lab[None, :]
    iou = np.triu(np.where(same, iou, 0.0), k=1)
    cmax = iou.max(axis=0)
    cmax_rows = np.broadcast_to(cmax[:, None], (P, P))
    if kernel == "gaussian":
        decay = np.exp(-(iou**2 - cmax_rows**2) / sigma)
    else:
        num, den = 1.0 - iou, 1.0 - cmax_rows
        with np.errstate(divide="ignore", invalid="ignore"):
            decay = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    coeff = decay.min(axis=0)
    decayed = np.empty(P)
    decayed[order] = scores[order] * coeff
    return NMSResult(_keep_order(decayed, score_threshold), decayed)


def sparse_nms(masks: Sequence[np.ndarray], labels, scores, ious: SparseIoUMatrix | None = None, sigma: float = 2.0,
               kernel: str = "gaussian", score_threshold: float = 0.5) -> NMSResult:
    """Matrix NMS evaluated only over stored (overlapping) proposal pairs.

    Produces the same survivors and decayed scores as :func:`matrix_nms`:
    pairs with zero IoU can never lower a decay coefficient below 1.
    """
    check_option(kernel, NMS_KERNELS, "kernel")
    check_positive(sigma, "sigma")
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    P = len(scores)
    if ious is None:
        ious = build_sparse_iou(masks)
    if ious.n_proposals != P or len(masks) != P:
        raise ValueError(f"IoU matrix covers {ious.n_proposals} proposals, got {P}")
    if P == 0:
        return NMSResult(np.zeros(0, np.int64), np.zeros(0))
    rank = np.empty(P, dtype=np.int64)
    rank[_score_order(scores)] = np.arange(P)
    a, b, val = ious.pairs()
    same = labels[a] == labels[b]
    a, b, val = a[same], b[same], val[same]
    hi = np.where(rank[a] < rank[b], a, b)
    lo = np.where(rank[a] < rank[b], b, a)
    cmax = np.zeros(P)
    np.maximum.at(cmax, lo, val)
    c = cmax[hi]
    if kernel == "gaussian":
        ratio = np.exp(-(val**2 - c**2) / sigma)
    else:
        den = 1.0 - c
        ratio = np.where(den > 0, (1.0 - val) / np.where(den > 0, den, 1.0), np.inf)
    coeff = np.ones(P)
    np.minimum.at(coeff, lo, ratio)
    decayed = scores * coeff
    return NMSResult(_keep_order(decayed, score_threshold), decayed)
