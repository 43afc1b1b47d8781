"""Evaluation metrics with permutation alignment.

Endmember estimates carry an inherent column-permutation ambiguity; all
metrics take an explicit permutation, found by ``align_permutation``
(exhaustive search for N <= 9, greedy otherwise). Per-pixel endmember
estimates are the patch estimate replicated across the patch; when an outlier
mask is supplied, outlier pixels are excluded from the spectral and abundance
averages (their ground truth carries no meaningful endmembers/abundances).
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DataError

MSE_DB_FLOOR = -300.0


@dataclass(frozen=True)
class EvalReport:
    sam_deg: float
    mse_db: float
    rmse_s: float
    outlier_precision: float
    outlier_recall: float
    outlier_f1: float
    permutation: Tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "sam_deg": self.sam_deg,
            "mse_db": self.mse_db,
            "rmse_s": self.rmse_s,
            "outlier_precision": self.outlier_precision,
            "outlier_recall": self.outlier_recall,
            "outlier_f1": self.outlier_f1,
            "permutation": list(self.permutation),
        }


def _as_stack(x, name) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise DataError(f"{name} must be an (M, N) matrix or a (T, M, N) stack")
    return a


def _column_angle_matrix(est: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """(N, N) mean angle in radians between est column i and truth column j."""
    e_norm = np.linalg.norm(est, axis=1)
    t_norm = np.linalg.norm(truth, axis=1)
    if np.any(e_norm <= 0) or np.any(t_norm <= 0):
        raise DataError("zero endmember column: angle undefined")
    dots = np.einsum("tmi,tmj->tij", est, truth)
    cos = dots / (e_norm[:, :, None] * t_norm[:, None, :])
    return np.mean(np.arccos(np.clip(cos, -1.0, 1.0)), axis=0)


def align_permutation(est, truth) -> Tuple[int, ...]:
    """Permutation p minimizing mean SAM of est[:, :, p] against truth."""
    est = _as_stack(est, "est")
    truth = _as_stack(truth, "truth")
    if est.shape != truth.shape:
        raise DataError(f"shape mismatch: {est.shape} vs {truth.shape}")
    n = est.shape[2]
    cost = _column_angle_matrix(est, truth)
    if n <= 9:
        best, best_val = None, np.inf
        for perm in itertools.permutations(range(n)):
            val = sum(cost[perm[j], j] for j in range(n))
            if val < best_val:
                best, best_val = perm, val
        return tuple(best)
    warnings.warn("N > 9: using greedy permutation matching")
    perm = [-1] * n
    used = set()
    for j in np.argsort(cost.min(axis=0)):
        order = np.argsort(cost[:, j])
        for i in order:
            if int(i) not in used:
                perm[j] = int(i)
                used.add(int(i))
                break
    return tuple(perm)


def _apply_perm(est: np.ndarray, perm) -> np.ndarray:
    return est[:, :, list(perm)]


def sam(est, truth, perm) -> float:
    """Mean spectral angle (degrees) over pixels and endmembers."""
    est = _as_stack(est, "est")
    truth = _as_stack(truth, "truth")
    if est.shape != truth.shape:
        raise DataError(f"shape mismatch: {est.shape} vs {truth.shape}")
    e = _apply_perm(est, perm)
    e_norm = np.linalg.norm(e, axis=1)
    t_norm = np.linalg.norm(truth, axis=1)
    if np.any(e_norm <= 0) or np.any(t_norm <= 0):
        raise DataError("zero endmember column: angle undefined")
    cos = np.einsum("tmn,tmn->tn", e, truth) / (e_norm * t_norm)
    return float(np.degrees(np.mean(np.arccos(np.clip(cos, -1.0, 1.0)))))


def mse_db(est, truth, perm) -> float:
    """10 log10 of (1/(N T)) sum_t ||A_t - Ahat_t||_F^2, floored at -300 dB."""
    est = _as_stack(est, "est")
    truth = _as_stack(truth, "truth")
    if est.shape != truth.shape:
        raise DataError(f"shape mismatch: {est.shape} vs {truth.shape}")
    diff = _apply_perm(est, perm) - truth
    n = est.shape[2]
    mse = float(np.mean(np.sum(diff * diff, axis=(1, 2)))) / n
    if mse <= 10.0 ** (MSE_DB_FLOOR / 10.0):
        return MSE_DB_FLOOR
    return float(10.0 * np.log10(mse))


def rmse_s(est_abundances, truth_abundances, perm) -> float:
    """(1/T) sum_t sqrt(||s_t - shat_t||^2 / N)."""
    est = np.asarray(est_abundances, dtype=float)
    truth = np.asarray(truth_abundances, dtype=float)
    if est.shape != truth.shape or est.ndim != 2:
        raise DataError(f"shape mismatch: {est.shape} vs {truth.shape}")
    diff = est[:, list(perm)] - truth
    n = est.shape[1]
    return float(np.mean(np.sqrt(np.sum(diff * diff, axis=1) / n)))


def outlier_scores(omega, mask, threshold: float = 0.5):
    """(precision, recall, f1) of (omega > threshold) against the mask."""
    omega = np.asarray(omega, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if omega.shape != mask.shape:
        raise DataError("omega/mask length mismatch")
    pred = omega > threshold
    tp = float(np.sum(pred & mask))
    fp = float(np.sum(pred & ~mask))
    fn = float(np.sum(~pred & mask))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (2.0 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return precision, recall, f1


def expand_patch_endmembers(patch_endmembers: np.ndarray,
                            assignment: np.ndarray) -> np.ndarray:
    """Replicate per-patch (K, M, N) estimates into a per-pixel (T, M, N) stack."""
    patch_endmembers = np.asarray(patch_endmembers, dtype=float)
    return patch_endmembers[np.asarray(assignment)]


def evaluate(est_endmembers, est_abundances, truth_endmembers, truth_abundances,
             outlier_mask: Optional[np.ndarray] = None,
             omega: Optional[np.ndarray] = None,
             threshold: float = 0.5) -> EvalReport:
    """Full report; outlier pixels are excluded from the spectral/abundance
    averages when a mask is given."""
    est_e = _as_stack(est_endmembers, "est_endmembers")
    tru_e = _as_stack(truth_endmembers, "truth_endmembers")
    est_s = np.asarray(est_abundances, dtype=float)
    tru_s = np.asarray(truth_abundances, dtype=float)
    if est_e.shape != tru_e.shape or est_s.shape != tru_s.shape:
        raise DataError("estimate/truth shape mismatch")
    keep = slice(None)
    if outlier_mask is not None:
        mask = np.asarray(outlier_mask, dtype=bool)
        keep = ~mask
    perm = align_permutation(est_e[keep], tru_e[keep])
    report_sam = sam(est_e[keep], tru_e[keep], perm)
    report_mse = mse_db(est_e[keep], tru_e[keep], perm)
    report_rmse = rmse_s(est_s[keep], tru_s[keep], perm)
    if outlier_mask is not None and omega is not None:
        p, r, f1 = outlier_scores(omega, outlier_mask, threshold)
    else:
        p = r = f1 = 0.0
    return EvalReport(sam_deg=report_sam, mse_db=report_mse, rmse_s=report_rmse,
                      outlier_precision=p, outlier_recall=r, outlier_f1=f1,
                      permutation=perm)
