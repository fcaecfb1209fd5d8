"""Recovery strategies: sketched measurements -> SVD factors.

Three interchangeable back ends turn a forward sketch ``M = A @ Omega`` and
an adjoint sketch ``W = A.T @ Upsilon`` into a rank-<=p factorization
``U @ diag(sigma) @ Vt``:

* ``singlepass`` -- needs no extra measurements; one thin QR plus a thin SVD.
* ``compact``    -- same inputs, but the pseudoinverses and the
  eigendecomposition are p x p, so the thin SVD disappears.
* ``oversampled`` -- spends an extra block of forward measurements on a wide
  core sketch and solves a small core problem; pays off on slowly decaying
  spectra.

When the forward sketch is exactly rank-deficient (e.g. it comes out of the
nuclear-norm solver, whose shrinkage zeroes trailing singular values), the
adjoint basis is truncated to that rank before the oblique solve.  The
square system ``P.T @ Omega`` is otherwise free to amplify small
inconsistencies between the two sketches through its junk directions.  For
full-rank inputs the truncation is a no-op and the classic recovery runs
unchanged.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .linop import apply as op_apply

__all__ = [
    "SvdFactors",
    "LordApprox",
    "singlepass",
    "compact",
    "oversampled",
    "truncate_factors",
    "NumericalConsistencyError",
]

logger = logging.getLogger(__name__)

# Threshold below which a negative eigenvalue of the p x p Gram matrix is
# treated as roundoff (relative to the top eigenvalue) rather than a bug.
_EIG_CLAMP_REL = 1e-12


class NumericalConsistencyError(RuntimeError):
    """A dense kernel produced values outside its numerically valid range."""


@dataclass(frozen=True)
class SvdFactors:
    """A rank-<=p approximation ``U @ diag(sigma) @ Vt``.

    ``sigma`` is nonnegative and sorted descending.
    """

    U: np.ndarray
    sigma: np.ndarray
    Vt: np.ndarray

    @property
    def rank_width(self):
        return self.sigma.size

    def shape(self):
        return (self.U.shape[0], self.Vt.shape[1])

    def dense(self):
        return (self.U * self.sigma) @ self.Vt

    def diagonal(self):
        """Diagonal of the reconstructed matrix, without densifying it."""
        return np.einsum("ij,ij->i", self.U * self.sigma, self.Vt.T)


@dataclass(frozen=True)
class LordApprox:
    """Full structured approximation ``U S Vt + diag(d)``."""

    factors: SvdFactors
    d: np.ndarray = field(default=None)

    def dense(self):
        out = self.factors.dense()
        if self.d is not None:
            out[np.diag_indices_from(out)] += self.d
        return out

    def diagonal(self):
        diag = self.factors.diagonal()
        if self.d is not None:
            diag = diag + self.d
        return diag


def _pinv(mat, n_ambient):
    """Pseudoinverse with the standard relative cutoff max(N, p) * eps."""
    rcond = max(n_ambient, max(mat.shape)) * np.finfo(float).eps
    return np.linalg.pinv(mat, rcond=rcond)


def _numrank(svals, n, p):
    if svals.size == 0 or svals[0] <= 0:
        return 0
    return int(np.sum(svals > max(n, p) * np.finfo(float).eps * svals[0]))


def _validate_measurements(M, omega, W):
    M = np.asarray(M, dtype=float)
    omega = np.asarray(omega, dtype=float)
    W = np.asarray(W, dtype=float)
    if not (M.shape == omega.shape == W.shape):
        raise ValueError(
            f"measurement shapes must match, got M={M.shape} "
            f"Omega={omega.shape} W={W.shape}"
        )
    for name, arr in (("M", M), ("Omega", omega), ("W", W)):
        if not np.isfinite(arr).all():
            raise ValueError(f"non-finite entries in {name}")
    return M, omega, W


def _pad_factors(U, sigma, Vt, V_completion, width):
    """Zero-pad a rank-r factorization out to the full sketch width.

    The padded right factors reuse ``V_completion`` (orthonormal columns
    perpendicular to the recovered ones) so V stays orthonormal; the padded
    singular values are zero, so the reconstruction is unchanged.
    """
    n = U.shape[0]
    r = sigma.size
    U2 = np.zeros((n, width))
    U2[:, :r] = U
    s2 = np.zeros(width)
    s2[:r] = sigma
    Vt2 = np.empty((width, Vt.shape[1]))
    Vt2[:r] = Vt
    Vt2[r:] = V_completion.T
    return SvdFactors(U2, s2, Vt2)


def singlepass(M, omega, W):
    """Recover factors from ``M = A @ Omega`` and ``W = A.T @ Upsilon``.

    Orthogonalizes the adjoint sketch into a row-space basis P, solves the
    small system ``(P.T @ Omega)`` by pseudoinverse, and SVDs the resulting
    thin matrix.
    """
    M, omega, W = _validate_measurements(M, omega, W)
    N, p = M.shape
    r = _numrank(np.linalg.svd(M, compute_uv=False), N, p)
    if r == p:
        P, _ = np.linalg.qr(W)
        B = M @ _pinv(P.T @ omega, N)
        U, sigma, Zt = np.linalg.svd(B, full_matrices=False)
        V = P @ Zt.T
        return SvdFactors(U, sigma, V.T)
    Uw, _, _ = np.linalg.svd(W, full_matrices=False)
    if r == 0:
        return SvdFactors(np.zeros((N, p)), np.zeros(p), Uw.T.copy())
    P = Uw[:, :r]
    B = M @ _pinv(P.T @ omega, N)
    U, sigma, Zt = np.linalg.svd(B, full_matrices=False)
    V = P @ Zt.T
    return _pad_factors(U, sigma, V.T, Uw[:, r:], p)


def compact(M, omega, W, u_mode="listing"):
    """Recover factors using only p x p pseudoinverses and eigh.

    Both sketches are QR-decomposed (two thin QRs instead of one), after
    which every remaining kernel is p x p: the approximate core ``Psi``
    satisfies ``Psi.T @ Psi ~= Z Sigma^2 Z.T``, giving the right factors and
    singular values from a Hermitian eigendecomposition.

    ``u_mode`` selects how the left factors are assembled from the core
    pieces; "listing" (``P (B S+).T Z Sigma``) reproduces the exact-rank
    oracle, "variant" (same with Z transposed) is kept for comparison.
    """
    M, omega, W = _validate_measurements(M, omega, W)
    N, p = M.shape
    P, S = np.linalg.qr(M)
    r = _numrank(np.linalg.svd(S, compute_uv=False), N, p)
    if r == p:
        Q, _ = np.linalg.qr(W)
        Q_pad = None
    else:
        Uw, _, _ = np.linalg.svd(W, full_matrices=False)
        if r == 0:
            return SvdFactors(np.zeros((N, p)), np.zeros(p), Uw.T.copy())
        Q, Q_pad = Uw[:, :r], Uw[:, r:]
    B = Q.T @ omega
    Psi = S @ _pinv(B, N)
    evals, Z = np.linalg.eigh(Psi.T @ Psi)
    evals = evals[::-1]
    Z = np.ascontiguousarray(Z[:, ::-1])  # negative strides stall BLAS matmul
    clamp = _EIG_CLAMP_REL * max(1.0, float(evals[0]))
    if evals[-1] < -clamp:
        raise NumericalConsistencyError(
            f"Gram matrix eigenvalue {evals[-1]:.3e} below -{clamp:.3e}"
        )
    sigma = np.sqrt(np.clip(evals, 0.0, None))
    V = Q @ Z
    BSinv = B @ _pinv(S, N)
    if u_mode == "listing":
        U = P @ (BSinv.T @ Z * sigma)
    elif u_mode == "variant":
        U = P @ (BSinv.T @ Z.T * sigma)
    else:
        raise ValueError(f"unknown u_mode {u_mode!r}")
    if Q_pad is None:
        return SvdFactors(U, sigma, V.T)
    return _pad_factors(U, sigma, V.T, Q_pad, p)


def oversampled(A, P, Q, omega_core, upsilon_core):
    """Recover factors from orthonormal bases plus a wide core sketch.

    ``P`` spans the column space (QR of the forward sketch), ``Q`` the row
    space (QR of the adjoint sketch).  The core ``Upsilon'.T @ A @ Omega'``
    costs ``omega_core.shape[1]`` extra forward products; the small core is
    then solved by two pseudoinverses and SVDed.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    omega_core = np.asarray(omega_core, dtype=float)
    upsilon_core = np.asarray(upsilon_core, dtype=float)
    N = P.shape[0]
    C = upsilon_core.T @ op_apply(A, omega_core)
    left = upsilon_core.T @ P
    right = Q.T @ omega_core
    cond_l = np.linalg.cond(left)
    cond_r = np.linalg.cond(right)
    if max(cond_l, cond_r) > 1e8:
        logger.debug(
            "ill-conditioned core solve: cond(left)=%.3e cond(right)=%.3e",
            cond_l,
            cond_r,
        )
    core = _pinv(left, N) @ C @ _pinv(right, N)
    Uc, sigma, Vct = np.linalg.svd(core)
    return SvdFactors(P @ Uc, sigma, (Q @ Vct.T).T)


def truncate_factors(factors, tol=1e-10):
    """Drop trailing singular triplets with ``sigma_i <= tol * sigma_1``.

    Off by default everywhere: recoveries report full width.
    """
    if factors.sigma.size == 0 or factors.sigma[0] == 0:
        return factors
    keep = int(np.sum(factors.sigma > tol * factors.sigma[0]))
    return SvdFactors(
        factors.U[:, :keep], factors.sigma[:keep], factors.Vt[:keep, :]
    )
