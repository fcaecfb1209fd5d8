"""Matrix-free linear operators.

Every algorithm in this package touches the target matrix only through
batched forward products ``A @ B`` and adjoint products ``A.T @ B``.  This
module defines the operator contract plus the lazy composites needed by the
recovery pipelines: dense wrappers, diagonal operators, low-rank factors,
their sum, and deflated differences.  Operators are immutable after
construction, so they are safe to share across worker threads.
"""

import numpy as np

__all__ = [
    "LinOp",
    "DenseOp",
    "DiagOp",
    "LowRankOp",
    "LordOp",
    "DeflatedOp",
    "apply",
    "adjoint_apply",
    "materialize",
    "ShapeError",
    "MaterializeCapError",
]

# Refuse to densify anything above this many entries unless overridden.
DENSE_ENTRY_CAP = 25_000_000


class ShapeError(ValueError):
    """Operand shapes are incompatible with the operator."""


class MaterializeCapError(RuntimeError):
    """Dense materialization would exceed the configured entry cap."""


class LinOp:
    """Base class: a ``rows x cols`` real operator with forward and adjoint.

    Subclasses implement ``_matmat`` (forward) and ``_rmatmat`` (adjoint),
    both mapping a 2-d block of columns to a 2-d block of columns.
    """

    def __init__(self, rows, cols):
        if rows < 1 or cols < 1:
            raise ShapeError(f"operator dims must be positive, got {rows}x{cols}")
        self.rows = int(rows)
        self.cols = int(cols)

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def is_square(self):
        return self.rows == self.cols

    def _matmat(self, B):
        raise NotImplementedError

    def _rmatmat(self, B):
        raise NotImplementedError

    def _check(self, B, expected_rows, side):
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if B.ndim != 2 or B.shape[0] != expected_rows or B.shape[1] < 1:
            raise ShapeError(
                f"{side} operand of shape {np.shape(B)} incompatible with "
                f"operator of shape {self.rows}x{self.cols}"
            )
        return B

    def apply(self, B):
        """Return ``op @ B`` for a ``cols x b`` block ``B``."""
        return self._matmat(self._check(B, self.cols, "forward"))

    def apply_adjoint(self, B):
        """Return ``op.T @ B`` for a ``rows x b`` block ``B``."""
        return self._rmatmat(self._check(B, self.rows, "adjoint"))

    def __matmul__(self, B):
        return self.apply(B)

    def __repr__(self):
        return f"<{type(self).__name__} {self.rows}x{self.cols}>"


class DenseOp(LinOp):
    """Wrap an explicit matrix behind the operator contract."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ShapeError(f"dense operator needs a 2-d array, got ndim={matrix.ndim}")
        super().__init__(*matrix.shape)
        self.matrix = matrix

    def _matmat(self, B):
        return self.matrix @ B

    def _rmatmat(self, B):
        return self.matrix.T @ B


class DiagOp(LinOp):
    """Diagonal operator ``x -> d * x``."""

    def __init__(self, d):
        d = np.asarray(d, dtype=float).ravel()
        super().__init__(d.size, d.size)
        self.d = d

    def _matmat(self, B):
        return self.d[:, None] * B

    def _rmatmat(self, B):
        return self.d[:, None] * B


class LowRankOp(LinOp):
    """Low-rank operator ``U @ diag(sigma) @ Vt`` applied lazily."""

    def __init__(self, U, sigma, Vt):
        U = np.asarray(U, dtype=float)
        sigma = np.asarray(sigma, dtype=float).ravel()
        Vt = np.asarray(Vt, dtype=float)
        if U.shape[1] != sigma.size or Vt.shape[0] != sigma.size:
            raise ShapeError(
                f"factor shapes {U.shape}, ({sigma.size},), {Vt.shape} do not chain"
            )
        super().__init__(U.shape[0], Vt.shape[1])
        self.U, self.sigma, self.Vt = U, sigma, Vt

    def _matmat(self, B):
        return self.U @ (self.sigma[:, None] * (self.Vt @ B))

    def _rmatmat(self, B):
        return self.Vt.T @ (self.sigma[:, None] * (self.U.T @ B))


class LordOp(LinOp):
    """Sum of a low-rank part and a diagonal: ``x -> U S Vt x + d * x``."""

    def __init__(self, U, sigma, Vt, d):
        low = LowRankOp(U, sigma, Vt)
        d = np.asarray(d, dtype=float).ravel()
        if low.rows != low.cols or low.rows != d.size:
            raise ShapeError(
                f"low-rank part {low.rows}x{low.cols} and diagonal ({d.size},) "
                "must all share one square dimension"
            )
        super().__init__(low.rows, low.cols)
        self.low = low
        self.d = d

    def _matmat(self, B):
        return self.low._matmat(B) + self.d[:, None] * B

    def _rmatmat(self, B):
        return self.low._rmatmat(B) + self.d[:, None] * B


class DeflatedOp(LinOp):
    """Lazy difference ``base - subtracted``, e.g. a residual after deflation."""

    def __init__(self, base, subtracted):
        if base.shape != subtracted.shape:
            raise ShapeError(
                f"cannot deflate {base.rows}x{base.cols} by "
                f"{subtracted.rows}x{subtracted.cols}"
            )
        super().__init__(base.rows, base.cols)
        self.base = base
        self.subtracted = subtracted

    def _matmat(self, B):
        return self.base._matmat(B) - self.subtracted._matmat(B)

    def _rmatmat(self, B):
        return self.base._rmatmat(B) - self.subtracted._rmatmat(B)


# ------------------------------------------------------------------------
# Module-level entry points
# ------------------------------------------------------------------------


def apply(op, B):
    """Forward product ``op @ B``."""
    return op.apply(B)


def adjoint_apply(op, B):
    """Adjoint product ``op.T @ B``."""
    return op.apply_adjoint(B)


def materialize(op, cap=DENSE_ENTRY_CAP):
    """Densify ``op`` column by column; refuses above ``cap`` total entries.

    Meant for test oracles and small-scale reporting, never for the
    measurement pipelines.
    """
    if isinstance(op, np.ndarray):
        return np.asarray(op, dtype=float)
    if op.rows * op.cols > cap:
        raise MaterializeCapError(
            f"{op.rows}x{op.cols} = {op.rows * op.cols} entries exceeds cap {cap}"
        )
    return op.apply(np.eye(op.cols))
