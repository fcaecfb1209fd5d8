"""Synthetic test matrices: plateau-plus-decay spectra and LoRD mixing.

Three families of approximately low-rank matrices, each with ``k`` unit
singular values followed by a configurable tail:

* ``exp(t)``   -- tail ``10**(-t*j)``, random orthogonal singular spaces;
* ``poly(t)``  -- tail ``(j+1)**(-t)``, same construction;
* ``noise(t)`` -- k unit diagonal entries plus i.i.d. Gaussian noise with
  entrywise deviation ``t / sqrt(N)``.

A Gaussian diagonal is then mixed in with its energy pinned relative to the
low-rank part by the ratio ``xi``: at ``xi = 1`` the squared norm of the
added diagonal equals the average squared column norm of the low-rank part.
"""

from dataclasses import dataclass

import numpy as np

from .linop import DENSE_ENTRY_CAP, LinOp, MaterializeCapError
from .sketch import ConfigError, rng_for

__all__ = [
    "PAPER_FAMILY_PARAMS",
    "SynthSpec",
    "gen_lowrank",
    "mix_diagonal",
    "sample_lord",
    "toy_operator",
    "DegenerateInputError",
]

PAPER_FAMILY_PARAMS = {
    "exp": (0.5, 0.1, 0.01),
    "poly": (2.0, 1.0, 0.5),
    "noise": (1e-4, 1e-2, 0.1),
}

# Stream ids reserved for matrix generation under a sample seed; sketch
# draws use ids >= 16 so the two never collide.
_STREAM_LEFT, _STREAM_RIGHT, _STREAM_NOISE, _STREAM_DIAG = 0, 1, 2, 3


class DegenerateInputError(ValueError):
    """Input leaves the requested construction undefined."""


@dataclass(frozen=True)
class SynthSpec:
    """One synthetic matrix configuration."""

    family: str
    t: float
    n: int
    k: int
    xi: float
    seed: int

    def validate(self, allow_nonstandard=False):
        if self.family not in PAPER_FAMILY_PARAMS:
            raise ConfigError(
                f"unknown family {self.family!r}, expected one of "
                f"{tuple(PAPER_FAMILY_PARAMS)}"
            )
        if not 1 <= self.k <= self.n:
            raise ConfigError(f"need 1 <= k <= N, got k={self.k}, N={self.n}")
        if self.xi < 0:
            raise ConfigError(f"xi must be nonnegative, got {self.xi}")
        standard = any(
            abs(self.t - t0) < 1e-12 for t0 in PAPER_FAMILY_PARAMS[self.family]
        )
        if not standard and not allow_nonstandard:
            raise ConfigError(
                f"{self.family}({self.t}) is not one of the standard decay "
                f"parameters {PAPER_FAMILY_PARAMS[self.family]}; pass "
                "allow_nonstandard=True to use it anyway"
            )
        return self


def _random_orthogonal(n, seed, stream):
    g = rng_for(seed, stream).standard_normal((n, n))
    q, _ = np.linalg.qr(g)
    return q


def gen_lowrank(spec, cap=DENSE_ENTRY_CAP):
    """Dense N x N draw of the low-rank component for ``spec``."""
    n, k, t = spec.n, spec.k, spec.t
    if n * n > cap:
        raise MaterializeCapError(
            f"{n}x{n} = {n * n} entries exceeds dense generation cap {cap}"
        )
    if spec.family == "noise":
        L = np.zeros((n, n))
        L[np.arange(k), np.arange(k)] = 1.0
        if t != 0:
            noise = rng_for(spec.seed, _STREAM_NOISE).standard_normal((n, n))
            L += (t / np.sqrt(n)) * noise
        return L
    svals = np.ones(n)
    tail = np.arange(1, n - k + 1, dtype=float)
    if spec.family == "exp":
        svals[k:] = 10.0 ** (-t * tail)
    else:  # poly
        svals[k:] = (tail + 1.0) ** (-t)
    U = _random_orthogonal(n, spec.seed, _STREAM_LEFT)
    V = _random_orthogonal(n, spec.seed, _STREAM_RIGHT)
    return (U * svals) @ V.T


def mix_diagonal(L, d_raw, xi):
    """Add a diagonal scaled so its energy is ``xi**2 * ||L||_F^2 / N``.

    Returns the mixed dense matrix and the scaled diagonal that went in.
    """
    L = np.asarray(L, dtype=float)
    d_raw = np.asarray(d_raw, dtype=float).ravel()
    n = L.shape[0]
    if xi < 0:
        raise ConfigError(f"xi must be nonnegative, got {xi}")
    if xi == 0:
        return L.copy(), np.zeros(n)
    d_norm2 = float(d_raw @ d_raw)
    if d_norm2 == 0:
        raise DegenerateInputError("cannot scale a zero diagonal draw with xi > 0")
    scale = xi * np.sqrt(float((L * L).sum()) / (n * d_norm2))
    d = scale * d_raw
    A = L.copy()
    A[np.arange(n), np.arange(n)] += d
    return A, d


def sample_lord(spec, cap=DENSE_ENTRY_CAP):
    """Draw one full LoRD instance: returns ``(A, L, d)`` dense."""
    spec.validate(allow_nonstandard=True)
    L = gen_lowrank(spec, cap=cap)
    if spec.xi == 0:
        return L.copy(), L, np.zeros(spec.n)
    d_raw = rng_for(spec.seed, _STREAM_DIAG).standard_normal(spec.n)
    A, d = mix_diagonal(L, d_raw, spec.xi)
    return A, L, d


class _OnesPlusIdentityOp(LinOp):
    """Matrix-free ``x -> (sum x) 1 + x``, i.e. the all-ones matrix plus I."""

    def __init__(self, n):
        super().__init__(n, n)

    def _matmat(self, B):
        return B + B.sum(axis=0, keepdims=True)

    _rmatmat = _matmat  # symmetric


def toy_operator(n):
    """The rank-one-plus-identity model operator; ``||A||_F^2 = N(N+3)``."""
    if n < 1:
        raise ConfigError(f"operator size must be positive, got {n}")
    return _OnesPlusIdentityOp(n)
