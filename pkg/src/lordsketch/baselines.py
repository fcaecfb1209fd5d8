"""Comparison methods: sketched SVD, sketched diagonal, and the two
sequential low-rank/diagonal pipelines.

Each baseline is wired to any of the three recovery strategies and to the
shared measurement accounting, so a benchmark run spends the same operator
budget per method.
"""

from dataclasses import dataclass

import numpy as np

from .linop import DeflatedOp, DiagOp, LowRankOp, adjoint_apply
from .linop import apply as op_apply
from .recovery import LordApprox
from .sketch import ConfigError, UnsupportedOperatorError
from .sketchlord import recover_factors

__all__ = ["DiagEstimate", "ssvd", "xdiag", "lor_then_d", "d_then_lor"]


@dataclass(frozen=True)
class DiagEstimate:
    """Estimated diagonal plus the orthonormal basis kept for reuse."""

    d: np.ndarray
    Q: np.ndarray
    warning: str = ""


def _require_square(A, what):
    if not A.is_square:
        raise UnsupportedOperatorError(
            f"{what} needs a square operator, got {A.rows}x{A.cols}"
        )


def ssvd(A, omega, upsilon, recovery="singlepass", core=None):
    """Sketched SVD: forward + adjoint measurements, then a recovery pass."""
    _require_square(A, "sketched SVD")
    if omega.shape != upsilon.shape:
        raise ConfigError(
            f"sketch widths must match, got {omega.shape} and {upsilon.shape}"
        )
    M = op_apply(A, omega.omega)
    W = adjoint_apply(A, upsilon.omega)
    return recover_factors(M, omega.omega, W, recovery, operator=A, core=core)


def _colnormalize(mat):
    norms = np.linalg.norm(mat, axis=0)
    out = np.zeros_like(mat)
    nz = norms > 0
    out[:, nz] = mat[:, nz] / norms[nz]
    return out


def _xdiag_core(A, s):
    """Shared body of the sketched diagonal estimator.

    Returns ``(d, Q, M, warning)`` so callers can recycle the forward
    measurements.  Costs p forward plus p adjoint products.
    """
    _require_square(A, "sketched diagonal estimation")
    omega = s.omega
    n, p = omega.shape
    M = op_apply(A, omega)
    if not M.any():
        return np.zeros(n), np.zeros((n, p)), M, "zero measurements; returning d = 0"
    Q, R = np.linalg.qr(M)
    Z = adjoint_apply(A, Q)
    try:
        S = _colnormalize(np.linalg.inv(R).T)
    except np.linalg.LinAlgError:
        S = _colnormalize(np.linalg.pinv(R).T)
    # Top-space estimate diag(Q Q.T A) with its leave-one-out downdate
    # diag(Q S S.T Q.T A), plus one deflated probe per column.  The plain
    # projected-probe residual vanishes identically because M = Q R.
    d_top = np.einsum("ij,ij->i", Q, Z)
    QS = Q @ S
    d_loo = np.einsum("ij,ij->i", QS, Z @ S)
    c = np.einsum("ij,ij->j", S, R)  # diag(S.T R): probe-direction weights
    d_probe = (omega * QS) @ c
    d = d_top + (d_probe - d_loo) / p
    return d, Q, M, ""


def xdiag(A, s):
    """Measurement-efficient sketched estimate of ``diag(A)``.

    Unbiased over the sketch draw; exact when ``rank(A) < p``.
    """
    d, Q, _, warning = _xdiag_core(A, s)
    return DiagEstimate(d=d, Q=Q, warning=warning)


def lor_then_d(A, omega, upsilon, gamma, recovery="singlepass", core=None):
    """Low-rank first, then probe the deflated residual for its diagonal.

    The residual ``A - U S Vt`` stays matrix-free; its diagonal comes from
    averaging ``gamma * (B @ gamma)`` over the +-1 probe columns.  Passing
    ``gamma=None`` ablates the diagonal round and reduces to the sketched
    SVD output with a zero diagonal.
    """
    factors = ssvd(A, omega, upsilon, recovery=recovery, core=core)
    if gamma is None:
        return LordApprox(factors=factors, d=np.zeros(A.rows))
    B = DeflatedOp(A, LowRankOp(factors.U, factors.sigma, factors.Vt))
    d = (gamma.omega * op_apply(B, gamma.omega)).mean(axis=1)
    return LordApprox(factors=factors, d=d)


def d_then_lor(A, omega, upsilon, recovery="singlepass", core=None):
    """Diagonal first, then low-rank recovery of the deflated measurements.

    The forward measurements from the diagonal step are recycled: only one
    extra adjoint round is spent, for three width-p rounds total.
    """
    d, _, M, _ = _xdiag_core(A, omega)
    M_defl = M - d[:, None] * omega.omega
    W = adjoint_apply(A, upsilon.omega) - d[:, None] * upsilon.omega
    deflated = DeflatedOp(A, DiagOp(d)) if recovery == "oversampled" else None
    factors = recover_factors(
        M_defl, omega.omega, W, recovery, operator=deflated, core=core
    )
    return LordApprox(factors=factors, d=d)
