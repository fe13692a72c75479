"""Sparse linear regression primitives.

Everything here works on plain arrays; library bookkeeping (which column is
which term, normalization frames) lives in the discovery layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "SparseLinearModel",
    "ConstrainedModelMatrix",
    "least_squares",
    "stlsq",
    "stlsq_constrained",
    "null_space_basis",
    "null_space_basis_gap",
    "adm_sparsest",
]

RANK_RTOL = 1e-10  # relative singular value cutoff shared by lstsq and null space


@dataclass
class SparseLinearModel:
    """Result of one sparse fit: b ~ A @ coefficients.

    ``coefficients`` are in the unnormalized data frame.  ``threshold`` is
    the sparsity parameter the fit used (applied in the normalized frame
    when column norms were supplied).  ``lhs`` tags what the target column
    was (library index or name); the discovery layer sets it.
    """

    coefficients: np.ndarray
    threshold: float
    train_residual: float
    lhs: object = None
    rank_deficient: bool = False
    iterations: int = 0

    @property
    def nonzero_count(self):
        return int(np.count_nonzero(self.coefficients))

    @property
    def support(self):
        return tuple(np.flatnonzero(self.coefficients).tolist())


def least_squares(A, b):
    """Minimum-norm least squares with relative singular cutoff 1e-10."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x, _, rank, _ = np.linalg.lstsq(A, b, rcond=RANK_RTOL)
    return x


def _relative_residual(A, b, x):
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return float(np.linalg.norm(A @ x))
    return float(np.linalg.norm(A @ x - b) / bnorm)


def _shrunk_solve(A, b, ridge):
    """Normal-equations solve with relative l2 shrinkage.

    The shrinkage is ``ridge`` times the mean squared column norm, so the
    parameter is scale-free with respect to column normalization.
    """
    G = A.T @ A
    p = G.shape[0]
    scale = float(np.trace(G)) / p if p else 0.0
    if scale == 0.0:
        return np.zeros(p)
    return scipy.linalg.solve(G + (ridge * scale) * np.eye(p), A.T @ b, assume_a="pos")


def stlsq(A, b, threshold, max_iter=10, norms=None, target_norm=1.0, lhs=None, ridge=0.0):
    """Sequentially thresholded least squares.

    Alternates least squares with hard thresholding at ``threshold`` until
    the active set stops changing (at most ``max_iter`` rounds).  When
    ``norms`` is given, ``A`` is taken to be column-normalized and an
    original-frame coefficient vector is produced by scaling with
    ``target_norm / norms``; the threshold always applies in the frame of
    ``A``.  An empty active set yields the all-zero model.

    ``ridge`` > 0 switches the fits to l2-shrunk solves (relative to the mean
    column energy), which keeps near-collinear column families from smearing
    weight over spurious supports; the final support is then refit unshrunk
    so coefficients stay unbiased.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, p = A.shape
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    if ridge > 0:
        xi = _shrunk_solve(A, b, ridge)
        rank_deficient = False  # shrinkage regularizes any deficiency
    else:
        xi, _, rank, _ = np.linalg.lstsq(A, b, rcond=RANK_RTOL)
        rank_deficient = rank < p
    active = None  # support of the last refit
    iterations = 0
    if threshold > 0:
        for iterations in range(1, max_iter + 1):
            keep = np.abs(xi) >= threshold
            if not keep.any():
                xi = np.zeros(p)
                active = keep
                break
            if active is not None and np.array_equal(keep, active):
                break  # stable: every retained |coefficient| >= threshold
            if ridge > 0:
                sol = _shrunk_solve(A[:, keep], b, ridge)
            else:
                sol = np.linalg.lstsq(A[:, keep], b, rcond=RANK_RTOL)[0]
            xi = np.zeros(p)
            xi[keep] = sol
            active = keep
        if ridge > 0 and active is not None and active.any():
            xi = np.zeros(p)
            xi[active] = np.linalg.lstsq(A[:, active], b, rcond=RANK_RTOL)[0]
    residual = _relative_residual(A, b, xi)
    coeffs = xi.copy()
    if norms is not None:
        coeffs = coeffs * (target_norm / np.asarray(norms, dtype=float))
    return SparseLinearModel(
        coefficients=coeffs,
        threshold=float(threshold),
        train_residual=residual,
        lhs=lhs,
        rank_deficient=bool(rank_deficient),
        iterations=iterations,
    )


@dataclass
class ConstrainedModelMatrix:
    """Matrix of per-column models with a zero diagonal.

    Column j of ``coefficients`` expresses library column j in terms of all
    other columns; the diagonal is structurally zero.
    """

    coefficients: np.ndarray
    thresholds: np.ndarray
    residuals: np.ndarray


def stlsq_constrained(theta, thresholds, max_iter=10, norms=None, ridge=0.0):
    """All-columns-at-once formulation via independent per-column fits.

    Equivalent to running ``stlsq`` once per column with that column as the
    target and the rest as regressors (the zero-diagonal constraint makes the
    joint problem separable).
    """
    theta = np.asarray(theta, dtype=float)
    m, p = theta.shape
    thresholds = np.broadcast_to(np.asarray(thresholds, dtype=float), (p,))
    coeff = np.zeros((p, p))
    resid = np.zeros(p)
    others = np.ones(p, dtype=bool)
    for j in range(p):
        others[j] = False
        cols = np.flatnonzero(others)
        sub_norms = None if norms is None else np.asarray(norms)[cols]
        tnorm = 1.0 if norms is None else float(np.asarray(norms)[j])
        model = stlsq(
            theta[:, cols],
            theta[:, j],
            thresholds[j],
            max_iter=max_iter,
            norms=sub_norms,
            target_norm=tnorm,
            lhs=j,
            ridge=ridge,
        )
        coeff[cols, j] = model.coefficients
        resid[j] = model.train_residual
        others[j] = True
    return ConstrainedModelMatrix(coeff, np.array(thresholds, dtype=float), resid)


def null_space_basis(theta, rank_rtol=RANK_RTOL):
    """Orthonormal basis of the (numerical) null space of ``theta``.

    Columns of the returned (p, r) array are right singular vectors whose
    singular values fall below ``rank_rtol`` times the largest one.  r = 0
    (an empty basis) is a valid outcome for full-rank noisy data.
    """
    theta = np.asarray(theta, dtype=float)
    u, s, vt = scipy.linalg.svd(theta, full_matrices=True)
    p = theta.shape[1]
    if s.size == 0:
        return np.eye(p)
    cutoff = rank_rtol * s[0]
    rank = int(np.sum(s > cutoff))
    return vt[rank:].T.copy()


def null_space_basis_gap(theta, ceiling=1e-2, min_gap=100.0):
    """Null-space basis chosen at the largest spectral gap.

    Noisy data has no strict null space; the directions that were null before
    corruption survive as a cluster of small singular values separated from
    the signal spectrum.  This scans boundaries whose trailing singular value
    is below ``ceiling`` times the largest, takes the boundary with the
    largest ratio s[i]/s[i+1], and returns the directions past it.  When no
    ratio reaches ``min_gap`` the cluster is deemed indistinct and the basis
    is empty.
    """
    theta = np.asarray(theta, dtype=float)
    _, s, vt = scipy.linalg.svd(theta, full_matrices=True)
    p = theta.shape[1]
    if s.size == 0:
        return np.eye(p)
    s_ext = np.concatenate([s, np.zeros(p - s.size)]) if s.size < p else s
    best, best_ratio = None, 0.0
    for i in range(p - 1):
        tail = s_ext[i + 1]
        if tail > ceiling * s_ext[0]:
            continue
        ratio = math.inf if tail == 0.0 else s_ext[i] / tail
        if ratio > best_ratio:
            best, best_ratio = i, ratio
    if best is None or best_ratio < min_gap:
        return np.empty((p, 0))
    return vt[best + 1 :].T.copy()


def smallest_singular_direction(theta):
    """Right singular vector of the smallest singular value (unit norm)."""
    theta = np.asarray(theta, dtype=float)
    _, _, vt = scipy.linalg.svd(theta, full_matrices=False)
    return vt[-1].copy()


def _soft(v, lam):
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def _gap_supports(v, gap_min, zero_tol):
    """Candidate support sizes of ``v`` read off magnitude gaps.

    Sorts |v| descending and cuts wherever consecutive magnitudes drop by a
    factor of ``gap_min`` or more.  Everything below ``zero_tol`` relative to
    the peak is treated as zero outright.
    """
    a = np.abs(v)
    order = np.argsort(-a)
    srt = a[order]
    if srt[0] == 0:
        return order, []
    cuts = []
    for k in range(1, len(srt)):
        if srt[k] <= zero_tol * srt[0]:
            cuts.append(k)
            break
        if srt[k - 1] / srt[k] >= gap_min:
            cuts.append(k)
    return order, cuts


def _refine_on_support(basis, mask):
    """Span direction with the least mass outside ``mask``.

    Returns (refined unit vector zeroed off support, off-support mass) or
    None when the restriction degenerates.
    """
    off = basis[~mask]
    if off.shape[0] == 0:
        leak = 0.0
        w = basis[:, 0]
    else:
        _, _, vt = np.linalg.svd(off, full_matrices=True)
        w = basis @ vt[-1]
    nw = np.linalg.norm(w)
    if nw == 0:
        return None
    w = w / nw
    leak = float(np.linalg.norm(w[~mask]))
    sparse = np.where(mask, w, 0.0)
    ns = np.linalg.norm(sparse)
    if ns == 0:
        return None
    return sparse / ns, leak


def adm_sparsest(
    basis,
    lam,
    max_iter=200,
    restarts=32,
    seed=0,
    zero_tol=1e-6,
    conv_tol=1e-10,
    max_coord_starts=64,
    gap_min=10.0,
    sparse_tol=1e-2,
):
    """Sparsest unit vector in the span of ``basis`` by alternating directions.

    Each restart alternates soft-thresholding with projection back onto the
    span until the iterate stops moving.  Restarts begin from projected
    coordinate directions (aimed at supports containing each coordinate;
    capped at ``max_coord_starts`` by projection size), every basis column,
    and seeded random unit combinations.

    The fixed point concentrates on a sparse support but keeps a small bias
    leaking into the other coordinates, so the raw iterate is never exactly
    sparse.  Each converged iterate is therefore cut at its magnitude gaps
    (factor ``gap_min`` drops) and re-solved for the span direction with the
    least off-support mass; a cut counts only when that mass stays below
    ``sparse_tol``.  The winner has the fewest nonzeros (ties: smaller
    off-support mass).  Returns a unit vector zeroed outside its support.
    """
    Y = np.asarray(basis, dtype=float)
    if Y.ndim != 2 or Y.shape[1] == 0:
        raise ValueError("basis must be (p, r) with r >= 1")
    p, r = Y.shape
    rng = np.random.default_rng(seed)
    proj = np.linalg.norm(Y, axis=1)  # |Y^T e_j| since rows index coordinates
    order = np.argsort(-proj)[: min(p, max_coord_starts)]
    starts = [Y @ Y[j] for j in order if proj[j] > 0]
    starts += [Y[:, i] for i in range(r)]
    for _ in range(max(0, restarts - r)):
        q = rng.standard_normal(r)
        q /= np.linalg.norm(q)
        starts.append(Y @ q)

    best = None
    for x0 in starts:
        nrm = np.linalg.norm(x0)
        if nrm == 0:
            continue
        q = Y.T @ (x0 / nrm)
        qn = np.linalg.norm(q)
        if qn == 0:
            continue
        q /= qn
        for _ in range(max_iter):
            x = _soft(Y @ q, lam)
            xn = np.linalg.norm(x)
            if xn == 0:
                break
            q_new = Y.T @ x
            q_new /= np.linalg.norm(q_new)
            if np.linalg.norm(q_new - q) < conv_tol:
                q = q_new
                break
            q = q_new
        v = Y @ q
        vn = np.linalg.norm(v)
        if vn == 0:
            continue
        v = v / vn
        order, cuts = _gap_supports(v, gap_min, zero_tol)
        candidates = []
        for k in cuts:
            mask = np.zeros(p, dtype=bool)
            mask[order[:k]] = True
            refined = _refine_on_support(Y, mask)
            if refined is None or refined[1] > sparse_tol:
                continue
            candidates.append(refined)
        if not candidates:
            # no clean cut: fall back to the raw iterate with a relative floor
            mask = np.abs(v) >= zero_tol * np.abs(v).max()
            if not mask.any():
                continue
            leak = float(np.linalg.norm(v[~mask]))
            sparse = np.where(mask, v, 0.0)
            candidates.append((sparse / np.linalg.norm(sparse), leak))
        for sparse, leak in candidates:
            key = (int(np.count_nonzero(sparse)), leak)
            if best is None or key < best[0]:
                best = (key, sparse)
    if best is None:
        raise ValueError("ADM failed to produce a nonzero vector")
    return best[1]
