"""Sketched recovery of low-rank-plus-diagonal operators.

The package is organized bottom-up:

* :mod:`lordsketch.linop`      matrix-free operator contract and composites
* :mod:`lordsketch.sketch`     seeded sign sketches, measurements, budgets
* :mod:`lordsketch.recovery`   singlepass / compact / oversampled recoveries
* :mod:`lordsketch.baselines`  SSVD, XDiag, and the two sequential pipelines
* :mod:`lordsketch.sketchlord` the joint nuclear-norm solver
* :mod:`lordsketch.synthgen`   synthetic spectra and the toy operator
* :mod:`lordsketch.metrics`    residual energies and closed-form bounds
* :mod:`lordsketch.harness`    config-driven experiments and CSV persistence
* :mod:`lordsketch.cli`        the ``lordsketch`` command
"""

from .baselines import DiagEstimate, d_then_lor, lor_then_d, ssvd, xdiag
from .linop import (
    DeflatedOp,
    DenseOp,
    DiagOp,
    LinOp,
    LordOp,
    LowRankOp,
    adjoint_apply,
    apply,
    materialize,
)
from .metrics import RecoveryReport, diag_residual_energy, residual_energy, toy_bounds
from .recovery import LordApprox, SvdFactors, compact, oversampled, singlepass
from .sketch import (
    MeasurementSet,
    SketchPair,
    adjoint_measure,
    budget_widths,
    forward_measure,
    lord_measure,
    make_rademacher,
    mvp_cost,
)
from .sketchlord import (
    AdmmConfig,
    AdmmTrace,
    admm_solve,
    l2_gradient,
    l2_loss,
    optimal_init,
    recover_diagonal,
    sketchlord,
    spectral_shrink,
)
from .synthgen import SynthSpec, gen_lowrank, mix_diagonal, sample_lord, toy_operator

__version__ = "0.1.0"
