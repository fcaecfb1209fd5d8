"""Seeded sketching matrices, measurement primitives, and MVP accounting.

Sketches are Rademacher sign matrices drawn from a counter-based generator
(Philox), keyed by ``(seed, stream)`` so any parallel schedule reproduces
the same numbers.  The three measurement primitives are the forward sketch
``A @ Omega``, the adjoint sketch ``A.T @ Upsilon``, and the entrywise
masked sketch ``(A @ Omega) * Omega_bar`` that exposes the diagonal of a
low-rank-plus-diagonal operator as a rank-one term.

The accounting helpers fix how a total measurement budget is split per
method: two-round methods spend ``b/2`` per round, sequential three-round
methods ``b/3``, and the oversampled recovery adds a wide core sketch whose
width is solved so the total still equals ``b``.
"""

from dataclasses import dataclass

import numpy as np

from .linop import apply as op_apply
from .linop import adjoint_apply

__all__ = [
    "SketchPair",
    "MeasurementSet",
    "rng_for",
    "make_rademacher",
    "lord_measure",
    "forward_measure",
    "adjoint_measure",
    "mvp_cost",
    "budget_widths",
    "ConfigError",
    "UnsupportedOperatorError",
    "METHODS",
    "RECOVERIES",
    "MEASUREMENT_ROUNDS",
]

METHODS = ("ssvd", "xdiag", "lor_then_d", "d_then_lor", "sketchlord")
RECOVERIES = ("singlepass", "compact", "oversampled")

# Rounds of width-p operator measurements each method performs.
MEASUREMENT_ROUNDS = {
    "ssvd": 2,
    "xdiag": 2,
    "sketchlord": 2,
    "lor_then_d": 3,
    "d_then_lor": 3,
}


class ConfigError(ValueError):
    """Unknown method/recovery name or an unsatisfiable budget split."""


class UnsupportedOperatorError(ValueError):
    """Operator shape not supported by the requested measurement."""


def rng_for(seed, *stream):
    """Philox generator keyed by ``(seed, *stream)``; bit-reproducible."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SketchPair:
    """An N x p sign matrix with its entrywise-inverse companion.

    The companion satisfies ``omega * omega_bar == 1`` entrywise; for real
    Rademacher noise the companion is the matrix itself.
    """

    omega: np.ndarray
    omega_bar: np.ndarray
    seed: int
    stream_id: int

    @property
    def shape(self):
        return self.omega.shape

    @property
    def width(self):
        return self.omega.shape[1]


@dataclass(frozen=True)
class MeasurementSet:
    """A block of operator measurements plus the MVPs it cost."""

    matrix: np.ndarray
    kind: str  # forward | adjoint | lord
    mvp_cost: int


def make_rademacher(n, p, seed, stream=0):
    """Draw an i.i.d. uniform +-1 sketch, deterministic in ``(seed, stream)``."""
    if n < 1 or p < 1:
        raise ConfigError(f"sketch dims must be positive, got {n}x{p}")
    rng = rng_for(seed, stream)
    omega = rng.integers(0, 2, size=(n, p)).astype(float) * 2.0 - 1.0
    return SketchPair(omega=omega, omega_bar=omega, seed=int(seed), stream_id=int(stream))


def lord_measure(A, s):
    """Masked forward sketch ``M = (A @ Omega) * Omega_bar``.

    For ``A = L + diag(d)`` the diagonal contributes the rank-one term
    ``d @ 1.T`` to ``M``, which is what the joint solver exploits.
    """
    if not A.is_square:
        raise UnsupportedOperatorError(
            f"masked sketch needs a square operator, got {A.rows}x{A.cols}"
        )
    M = op_apply(A, s.omega) * s.omega_bar
    return MeasurementSet(matrix=M, kind="lord", mvp_cost=s.width)


def forward_measure(A, s):
    """Forward sketch ``M = A @ Omega``."""
    return MeasurementSet(matrix=op_apply(A, s.omega), kind="forward", mvp_cost=s.width)


def adjoint_measure(A, s):
    """Adjoint sketch ``W = A.T @ Upsilon`` (stored so ``W.T = Upsilon.T @ A``)."""
    return MeasurementSet(
        matrix=adjoint_apply(A, s.omega), kind="adjoint", mvp_cost=s.width
    )


def _check_names(method, recovery):
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}, expected one of {METHODS}")
    if recovery not in RECOVERIES:
        raise ConfigError(f"unknown recovery {recovery!r}, expected one of {RECOVERIES}")


def mvp_cost(method, recovery, p_sketch, p_core=0):
    """Total operator MVPs for a configuration with round width ``p_sketch``.

    ``p_core`` is the width of the extra core sketch and only counts under
    the oversampled recovery (xdiag has no recovery step and never pays it).
    """
    _check_names(method, recovery)
    if p_sketch < 1 or p_core < 0:
        raise ConfigError(f"widths must be positive, got p={p_sketch}, core={p_core}")
    total = MEASUREMENT_ROUNDS[method] * int(p_sketch)
    if recovery == "oversampled" and method != "xdiag":
        if p_core < 1:
            raise ConfigError("oversampled recovery needs a positive core width")
        total += int(p_core)
    return total


def budget_widths(method, recovery, budget):
    """Solve per-round widths so the method spends exactly ``budget`` MVPs.

    Returns ``(p_sketch, p_core)`` with ``p_core = 0`` unless the recovery
    is oversampled.  Budgets are expected to be multiples of 6 so the
    two-round and three-round methods land on integers.
    """
    _check_names(method, recovery)
    budget = int(budget)
    rounds = MEASUREMENT_ROUNDS[method]
    if recovery == "oversampled" and method != "xdiag":
        # rounds * p + core = budget with core ~= 2p.
        p_sketch = budget // (rounds + 2)
        if p_sketch < 1:
            raise ConfigError(
                f"budget {budget} too small for {method} with oversampled recovery"
            )
        return p_sketch, budget - rounds * p_sketch
    if budget % rounds != 0:
        raise ConfigError(
            f"budget {budget} not divisible by the {rounds} rounds of {method}"
        )
    p_sketch = budget // rounds
    if p_sketch < 1:
        raise ConfigError(f"budget {budget} too small for {method}")
    return p_sketch, 0
