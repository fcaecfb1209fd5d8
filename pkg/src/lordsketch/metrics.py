"""Error metrics and the closed-form recovery bounds for the toy operator.

The reporting metric everywhere is the residual energy: squared Frobenius
error relative to the target's squared Frobenius norm, so 1.0 corresponds
to the all-zero recovery.  A diagonal-restricted variant measures how well
an approximation captures just ``diag(A)``.

For the rank-one-plus-identity toy operator the best-case errors of the
four non-joint strategies have closed forms; ``toy_bounds`` evaluates them.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .baselines import DiagEstimate
from .linop import DENSE_ENTRY_CAP, DiagOp, LinOp, LordOp, LowRankOp, materialize
from .recovery import LordApprox, SvdFactors

__all__ = [
    "RecoveryReport",
    "residual_energy",
    "diag_residual_energy",
    "toy_bounds",
    "UndefinedMetricError",
]

_SWEEP_BLOCK = 256


class UndefinedMetricError(ValueError):
    """The reference has zero energy, so the relative metric is undefined."""


@dataclass
class RecoveryReport:
    """One benchmark result row."""

    rho_total: float
    rho_diag: float
    mvp_cost: int
    iterations: Optional[int] = None
    runtime_s: float = 0.0


def _as_operator(approx):
    if isinstance(approx, np.ndarray):
        from .linop import DenseOp

        return DenseOp(approx)
    if isinstance(approx, LordApprox):
        f = approx.factors
        d = approx.d if approx.d is not None else np.zeros(f.U.shape[0])
        return LordOp(f.U, f.sigma, f.Vt, d)
    if isinstance(approx, SvdFactors):
        return LowRankOp(approx.U, approx.sigma, approx.Vt)
    if isinstance(approx, DiagEstimate):
        return DiagOp(approx.d)
    if isinstance(approx, LinOp):
        return approx
    raise TypeError(f"cannot interpret {type(approx).__name__} as an approximation")


def _approx_diagonal(approx):
    if isinstance(approx, np.ndarray):
        return np.diagonal(approx).copy()
    if isinstance(approx, (LordApprox, SvdFactors)):
        return approx.diagonal()
    if isinstance(approx, DiagEstimate):
        return approx.d
    op = _as_operator(approx)
    return np.diagonal(materialize(op)).copy()


def _sweep(ref, approx_op):
    """Exact error accumulation by an N-column identity sweep."""
    n = ref.cols
    err2 = 0.0
    ref2 = 0.0
    diag = np.empty(n)
    for start in range(0, n, _SWEEP_BLOCK):
        cols = np.arange(start, min(start + _SWEEP_BLOCK, n))
        E = np.zeros((n, cols.size))
        E[cols, np.arange(cols.size)] = 1.0
        ra = ref.apply(E)
        delta = ra - approx_op.apply(E)
        err2 += float((delta * delta).sum())
        ref2 += float((ra * ra).sum())
        diag[cols] = ra[cols, np.arange(cols.size)]
    return err2, ref2, diag


def residual_energy(ref, approx, cap=DENSE_ENTRY_CAP):
    """Relative squared Frobenius error ``||A - Ahat||^2 / ||A||^2``.

    ``ref`` may be a dense array or an operator; operators above the dense
    cap are compared through an exact N-column sweep.
    """
    approx_op = _as_operator(approx)
    if isinstance(ref, np.ndarray):
        ref2 = float((ref * ref).sum())
        if ref2 == 0:
            raise UndefinedMetricError("reference matrix has zero Frobenius norm")
        delta = ref - materialize(approx_op, cap=max(cap, ref.size))
        return float((delta * delta).sum()) / ref2
    if ref.rows * ref.cols <= cap:
        return residual_energy(materialize(ref, cap=cap), approx, cap=cap)
    err2, ref2, _ = _sweep(ref, approx_op)
    if ref2 == 0:
        raise UndefinedMetricError("reference operator has zero Frobenius norm")
    return err2 / ref2


def diag_residual_energy(ref, approx, cap=DENSE_ENTRY_CAP):
    """Residual energy restricted to the diagonals."""
    if isinstance(ref, np.ndarray):
        ref_diag = np.diagonal(ref)
    elif ref.rows * ref.cols <= cap:
        ref_diag = np.diagonal(materialize(ref, cap=cap))
    else:
        _, _, ref_diag = _sweep(ref, _as_operator(approx))
    denom = float(ref_diag @ ref_diag)
    if denom == 0:
        raise UndefinedMetricError("reference diagonal has zero norm")
    delta = ref_diag - _approx_diagonal(approx)
    return float(delta @ delta) / denom


def toy_bounds(n, k):
    """Best-case residual energies on the ones-plus-identity operator.

    Keys: diagonal-only, rank-k-only, diagonal-then-low-rank (identical to
    rank-k-only), and low-rank-then-diagonal.  Requires ``1 <= k <= N``.
    """
    if n < 1:
        raise ValueError(f"N must be positive, got {n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={n}")
    rho_d = (n - 1) / (n + 3)
    rho_lor = (1 - k / n) / (n + 3)
    rho_lor_then_d = (k / n - (k / n) ** 2) / (n + 3)
    return {
        "rho_d": rho_d,
        "rho_lor": rho_lor,
        "rho_d_then_lor": rho_lor,
        "rho_lor_then_d": rho_lor_then_d,
    }
