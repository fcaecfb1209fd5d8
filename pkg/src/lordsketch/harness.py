"""Config-driven experiment harness.

Runs the benchmark protocols (toy-operator sweep, synthetic grid, stability
sweep, single cells, bound tables) with deterministic seeding and optional
worker-pool parallelism, and persists one CSV row per evaluated cell.

Seeding: each cell gets a sample seed derived from ``(master_seed,
cell_index)``; matrix generation and every sketch draw inside the cell use
fixed stream ids under that seed, so the schedule never affects results and
reruns are byte-identical (runtime column aside).
"""

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np

from .baselines import d_then_lor, lor_then_d, ssvd, xdiag
from .linop import DenseOp, adjoint_apply
from .metrics import RecoveryReport, diag_residual_energy, residual_energy, toy_bounds
from .recovery import LordApprox
from .sketch import (
    METHODS,
    RECOVERIES,
    ConfigError,
    budget_widths,
    lord_measure,
    make_rademacher,
    mvp_cost,
)
from .sketchlord import (
    AdmmConfig,
    DivergenceError,
    recover_diagonal,
    recover_factors,
    sketchlord,
)
from .synthgen import PAPER_FAMILY_PARAMS, SynthSpec, sample_lord, toy_operator

__all__ = [
    "ExperimentConfig",
    "CSV_COLUMNS",
    "BOUNDS_COLUMNS",
    "STABILITY_CONFIGS",
    "load_config_file",
    "build_config",
    "run_experiment",
    "run_single",
    "run_bounds",
    "run_method",
    "WORKERS_ENV_VAR",
]

SCHEMA_VERSION = 1
WORKERS_ENV_VAR = "LORDSKETCH_WORKERS"

CSV_COLUMNS = [
    "experiment",
    "family",
    "t",
    "N",
    "k",
    "p_budget",
    "xi",
    "sample_seed",
    "method",
    "recovery",
    "mvp_cost",
    "rho_total",
    "rho_diag",
    "iterations",
    "runtime_s",
    "status",
    "eta",
    "lambda",
    "mu",
]

BOUNDS_COLUMNS = ["N", "k", "rho_d", "rho_lor", "rho_d_then_lor", "rho_lor_then_d"]

# The 14 hyperparameter rows of the stability sweep: (eta, lambda, momentum).
STABILITY_CONFIGS = [
    (1.0, 0.05, 0.95),
    (0.5, 0.05, 0.95),
    (0.25, 0.05, 0.95),
    (0.125, 0.05, 0.95),
    (1.0, 0.2, 0.95),
    (1.0, 0.1, 0.95),
    (1.0, 0.025, 0.95),
    (1.0, 0.0125, 0.95),
    (0.5, 0.025, 0.95),
    (0.25, 0.0125, 0.95),
    (0.5, 0.025, 0.99),
    (0.25, 0.0125, 0.99),
    (0.5, 0.025, 0.5),
    (0.25, 0.0125, 0.5),
]

_DEFAULT_FAMILIES = tuple(
    (fam, t) for fam in ("exp", "poly", "noise") for t in PAPER_FAMILY_PARAMS[fam]
)
_DEFAULT_XI = (0.0, 0.1, 1.0, 10.0)
_DEFAULT_TOY_BUDGETS = tuple(range(12, 121, 12))
_DESK_N_CAP = 500

# Sketch draws live in their own stream range under the sample seed, away
# from the generator streams used by synthgen (0..3).
_SKETCH_STREAM_BASE = 256


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run, fully determined together with ``master_seed``."""

    experiment: str
    n: int = 500
    k: int = 0  # 0 -> n // 100
    budget: int = 0  # 0 -> 18 * k
    budgets: tuple = _DEFAULT_TOY_BUDGETS
    families: tuple = _DEFAULT_FAMILIES
    xi: tuple = _DEFAULT_XI
    methods: tuple = METHODS
    recoveries: tuple = RECOVERIES
    samples: int = 30
    master_seed: int = 0
    eta: float = 1.0
    lam: float = 0.0125
    mu: float = 0.95
    ema_decay: float = 0.9
    ema_tol: float = 1e-7
    max_iters: int = 5000
    momentum_kind: str = "heavy_ball"
    output: str = ""
    workers: int = 1
    allow_large: bool = False
    # single-cell fields
    family: str = "exp"
    t: float = 0.5
    xi_single: float = 1.0
    method: str = "sketchlord"
    recovery: str = "compact"
    trace_path: str = ""
    # bounds fields
    k_max: int = 0  # 0 -> n

    def resolved_k(self):
        return self.k if self.k > 0 else max(1, self.n // 100)

    def resolved_budget(self):
        return self.budget if self.budget > 0 else 18 * self.resolved_k()

    def admm(self):
        return AdmmConfig(
            eta=self.eta,
            lam=self.lam,
            momentum=self.mu,
            ema_decay=self.ema_decay,
            ema_tol=self.ema_tol,
            max_iters=self.max_iters,
            momentum_kind=self.momentum_kind,
        )

    def validate(self):
        if self.experiment not in ("toy", "grid", "stability", "single", "bounds"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}, expected one of {METHODS}")
        for r in self.recoveries:
            if r not in RECOVERIES:
                raise ConfigError(
                    f"unknown recovery {r!r}, expected one of {RECOVERIES}"
                )
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.recovery not in RECOVERIES:
            raise ConfigError(f"unknown recovery {self.recovery!r}")
        if self.samples < 1:
            raise ConfigError(f"samples must be >= 1, got {self.samples}")
        if self.n > _DESK_N_CAP and not self.allow_large and self.experiment != "toy":
            raise ConfigError(
                f"N={self.n} above the desk-scale default {_DESK_N_CAP}; "
                "pass allow_large to opt in"
            )
        budgets = self.budgets if self.experiment == "toy" else (self.resolved_budget(),)
        for b in budgets:
            if b % 6 != 0:
                raise ConfigError(f"budget {b} must be a multiple of 6")
        self.admm().validate()
        return self


# ---------------------------------------------------------------------------
# Config file handling: flat `key = value` lines, `#` comments.
# ---------------------------------------------------------------------------

_LIST_KEYS = {"families", "xi", "methods", "recoveries", "budgets"}
_INT_KEYS = {"n", "k", "budget", "samples", "master_seed", "max_iters", "workers", "k_max"}
_FLOAT_KEYS = {"eta", "lam", "mu", "ema_decay", "ema_tol", "t", "xi_single"}
_BOOL_KEYS = {"allow_large"}
_STR_KEYS = {
    "experiment",
    "output",
    "momentum_kind",
    "family",
    "method",
    "recovery",
    "trace_path",
}
_KNOWN_KEYS = (
    _LIST_KEYS | _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS | {"schema_version"}
)


def load_config_file(path):
    """Parse a flat key-value config file into a raw string dict."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
    if "schema_version" not in values:
        raise ConfigError(f"{path}: missing mandatory key schema_version")
    if values.pop("schema_version") != str(SCHEMA_VERSION):
        raise ConfigError(
            f"{path}: unsupported schema_version (this build reads {SCHEMA_VERSION})"
        )
    return values


def _parse_family_token(token):
    token = token.strip()
    if not (token.endswith(")") and "(" in token):
        raise ConfigError(f"bad family token {token!r}, expected e.g. exp(0.5)")
    fam, t = token[:-1].split("(", 1)
    if fam not in PAPER_FAMILY_PARAMS:
        raise ConfigError(f"unknown family {fam!r} in {token!r}")
    return fam, float(t)


def _coerce(key, value):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"bad boolean for {key}: {value!r}")
    if key in _LIST_KEYS:
        tokens = [tok.strip() for tok in value.split(",") if tok.strip()]
        if key == "families":
            return tuple(_parse_family_token(tok) for tok in tokens)
        if key == "budgets":
            return tuple(int(tok) for tok in tokens)
        if key == "xi":
            return tuple(float(tok) for tok in tokens)
        return tuple(tokens)
    return value


def build_config(experiment, file_values=None, **overrides):
    """Assemble a validated config from file values plus overrides."""
    kwargs = {"experiment": experiment}
    for key, value in (file_values or {}).items():
        if key == "experiment":
            kwargs["experiment"] = value
            continue
        kwargs[key] = _coerce(key, value)
    for key, value in overrides.items():
        if value is not None:
            kwargs[key] = value
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


# ---------------------------------------------------------------------------
# Cell execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellTask:
    index: int
    experiment: str
    methods: tuple
    recoveries: tuple
    budget: int
    sample_seed: int
    admm: dict
    family: str = ""
    t: float = 0.0
    n: int = 0
    k: int = 0
    xi: float = 0.0
    salvage: bool = False
    collect_trace: bool = False


def sample_seed_for(master_seed, cell_index):
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(cell_index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _sketch_stream(method, recovery, round_id):
    # Canonical indices keep streams stable under config reordering.
    m_idx = METHODS.index(method)
    r_idx = RECOVERIES.index(recovery)
    return _SKETCH_STREAM_BASE + (m_idx * len(RECOVERIES) + r_idx) * 8 + round_id


def _method_sketch(A, method, recovery, sample_seed, width, round_id):
    return make_rademacher(
        A.rows, width, sample_seed, _sketch_stream(method, recovery, round_id)
    )


def run_method(A, method, recovery, budget, sample_seed, admm_cfg=None):
    """Run one method at the given total budget.

    Returns ``(approx, iterations, cost, runtime_s, trace)``; ``trace`` is
    only set for the joint method.
    """
    p, p_core = budget_widths(method, recovery, budget)

    def sk(width, round_id):
        return _method_sketch(A, method, recovery, sample_seed, width, round_id)

    core = None
    if recovery == "oversampled" and method != "xdiag":
        core = (sk(p_core, 3), sk(p_core, 4))
    trace = None
    t0 = time.perf_counter()
    if method == "ssvd":
        approx = ssvd(A, sk(p, 0), sk(p, 1), recovery=recovery, core=core)
    elif method == "xdiag":
        approx = xdiag(A, sk(p, 0))
    elif method == "lor_then_d":
        approx = lor_then_d(A, sk(p, 0), sk(p, 1), sk(p, 2), recovery=recovery, core=core)
    elif method == "d_then_lor":
        approx = d_then_lor(A, sk(p, 0), sk(p, 1), recovery=recovery, core=core)
    elif method == "sketchlord":
        approx, trace = sketchlord(
            A, sk(p, 0), sk(p, 1), admm_cfg or AdmmConfig(), recovery=recovery, core=core
        )
    else:
        raise ConfigError(f"unknown method {method!r}")
    runtime = time.perf_counter() - t0
    iterations = trace.iterations if trace is not None else None
    return approx, iterations, mvp_cost(method, recovery, p, p_core), runtime, trace


def _salvage_diverged(A, recovery, budget, sample_seed, exc):
    """Finish the joint pipeline on a diverged iterate.

    Used by the stability sweep so non-convergent hyperparameter rows still
    report their (necessarily bad) recovery error instead of vanishing.
    """
    if exc.X is None or not np.isfinite(exc.X).all():
        raise exc
    p, _ = budget_widths("sketchlord", recovery, budget)
    omega = _method_sketch(A, "sketchlord", recovery, sample_seed, p, 0)
    upsilon = _method_sketch(A, "sketchlord", recovery, sample_seed, p, 1)
    M = lord_measure(A, omega).matrix
    d = recover_diagonal(M, exc.X, omega.omega_bar)
    W = adjoint_apply(A, upsilon.omega) - d[:, None] * upsilon.omega
    factors = recover_factors(exc.X, omega.omega, W, "compact")
    approx = LordApprox(factors=factors, d=d)
    iterations = exc.trace.iterations if exc.trace is not None else None
    return approx, iterations, mvp_cost("sketchlord", recovery, p, 0)


def _cell_operator(task):
    if task.experiment == "toy":
        op = toy_operator(task.n)
        return op, op
    spec = SynthSpec(
        family=task.family, t=task.t, n=task.n, k=task.k, xi=task.xi, seed=task.sample_seed
    )
    A_dense, _, _ = sample_lord(spec)
    return DenseOp(A_dense), A_dense


def _base_row(task, method, recovery):
    toy = task.experiment == "toy"
    return {
        "experiment": task.experiment,
        "family": "toy" if toy else task.family,
        "t": None if toy else task.t,
        "N": task.n,
        "k": None if toy else task.k,
        "p_budget": task.budget,
        "xi": None if toy else task.xi,
        "sample_seed": task.sample_seed,
        "method": method,
        "recovery": recovery,
        "mvp_cost": None,
        "rho_total": None,
        "rho_diag": None,
        "iterations": None,
        "runtime_s": None,
        "status": "ok",
        "eta": task.admm["eta"],
        "lambda": task.admm["lam"],
        "mu": task.admm["momentum"],
    }


def run_cell(task):
    """Evaluate every (method, recovery) pair of one cell; never raises.

    Returns ``(rows, traces)``; failures become ``status=error:...`` rows so
    the run continues.
    """
    rows = []
    traces = {}
    try:
        A, ref = _cell_operator(task)
    except Exception as exc:
        for method in task.methods:
            for recovery in task.recoveries:
                row = _base_row(task, method, recovery)
                row["status"] = f"error:{type(exc).__name__}"
                rows.append(row)
        return rows, traces
    admm_cfg = AdmmConfig(**task.admm)
    for method in task.methods:
        for recovery in task.recoveries:
            row = _base_row(task, method, recovery)
            t0 = time.perf_counter()
            try:
                try:
                    approx, iterations, cost, runtime, trace = run_method(
                        A, method, recovery, task.budget, task.sample_seed, admm_cfg
                    )
                except DivergenceError as exc:
                    if not (task.salvage and method == "sketchlord"):
                        raise
                    approx, iterations, cost = _salvage_diverged(
                        A, recovery, task.budget, task.sample_seed, exc
                    )
                    runtime = time.perf_counter() - t0
                    trace = exc.trace
                    row["status"] = "diverged"
                row["mvp_cost"] = cost
                row["rho_total"] = residual_energy(ref, approx)
                row["rho_diag"] = diag_residual_energy(ref, approx)
                row["iterations"] = iterations
                row["runtime_s"] = runtime
                if task.collect_trace and trace is not None:
                    traces[(method, recovery)] = trace
            except Exception as exc:
                row["status"] = f"error:{type(exc).__name__}"
            rows.append(row)
    return rows, traces


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------


def _admm_dict(cfg):
    a = cfg.admm()
    return {
        "eta": a.eta,
        "lam": a.lam,
        "momentum": a.momentum,
        "ema_decay": a.ema_decay,
        "ema_tol": a.ema_tol,
        "max_iters": a.max_iters,
        "momentum_kind": a.momentum_kind,
    }


def _grid_tasks(cfg):
    tasks = []
    admm = _admm_dict(cfg)
    k = cfg.resolved_k()
    budget = cfg.resolved_budget()
    index = 0
    for family, t in cfg.families:
        for xi in cfg.xi:
            for _ in range(cfg.samples):
                tasks.append(
                    CellTask(
                        index=index,
                        experiment="grid",
                        methods=cfg.methods,
                        recoveries=cfg.recoveries,
                        budget=budget,
                        sample_seed=sample_seed_for(cfg.master_seed, index),
                        admm=admm,
                        family=family,
                        t=t,
                        n=cfg.n,
                        k=k,
                        xi=xi,
                    )
                )
                index += 1
    return tasks


def _toy_tasks(cfg):
    tasks = []
    admm = _admm_dict(cfg)
    index = 0
    for budget in cfg.budgets:
        for _ in range(cfg.samples):
            tasks.append(
                CellTask(
                    index=index,
                    experiment="toy",
                    methods=cfg.methods,
                    recoveries=cfg.recoveries,
                    budget=budget,
                    sample_seed=sample_seed_for(cfg.master_seed, index),
                    admm=admm,
                    n=cfg.n,
                )
            )
            index += 1
    return tasks


def _stability_tasks(cfg):
    tasks = []
    k = cfg.resolved_k()
    budget = cfg.resolved_budget()
    index = 0
    for eta, lam, mu in STABILITY_CONFIGS:
        admm = dict(_admm_dict(cfg), eta=eta, lam=lam, momentum=mu)
        for _ in range(cfg.samples):
            tasks.append(
                CellTask(
                    index=index,
                    experiment="stability",
                    methods=("sketchlord",),
                    recoveries=("compact",),
                    budget=budget,
                    sample_seed=sample_seed_for(cfg.master_seed, index),
                    admm=admm,
                    family=cfg.family,
                    t=cfg.t,
                    n=cfg.n,
                    k=k,
                    xi=cfg.xi_single,
                    salvage=True,
                )
            )
            index += 1
    return tasks


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows(rows, fh, header=True):
    writer = csv.writer(fh)
    if header:
        writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[col]) for col in CSV_COLUMNS])


def effective_workers(flag_value):
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"bad {WORKERS_ENV_VAR}={env!r}") from exc
    return max(1, int(flag_value))


def run_experiment(cfg, progress=None):
    """Run a toy/grid/stability/single experiment and stream rows to CSV.

    Returns the full row list.  Cells execute across a worker pool when the
    effective worker count exceeds one; rows are emitted in cell order
    regardless of completion order, so output bytes match a sequential run.
    """
    cfg.validate()
    if cfg.experiment == "grid":
        tasks = _grid_tasks(cfg)
    elif cfg.experiment == "toy":
        tasks = _toy_tasks(cfg)
    elif cfg.experiment == "stability":
        tasks = _stability_tasks(cfg)
    elif cfg.experiment == "single":
        _, _, rows = run_single(cfg)
        if cfg.output:
            with open(cfg.output, "w", newline="") as fh:
                write_rows(rows, fh)
        return rows
    else:
        raise ConfigError(f"run_experiment cannot handle {cfg.experiment!r}")

    workers = effective_workers(cfg.workers)
    all_rows = []
    sink = open(cfg.output, "w", newline="") if cfg.output else io.StringIO()
    try:
        write_rows([], sink, header=True)
        sink.flush()

        def emit(rows):
            write_rows(rows, sink, header=False)
            sink.flush()
            all_rows.extend(rows)
            if progress is not None:
                progress(len(all_rows), len(tasks))

        if workers <= 1:
            for task in tasks:
                emit(run_cell(task)[0])
        else:
            pending = {}
            next_index = 0
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(run_cell, task): task.index for task in tasks}
                for future in as_completed(futures):
                    pending[futures[future]] = future.result()[0]
                    while next_index in pending:
                        emit(pending.pop(next_index))
                        next_index += 1
    finally:
        sink.close()
    return all_rows


def run_single(cfg):
    """One full run of one method; returns ``(report, trace, rows)``.

    Dumps the per-iteration solver trace to ``cfg.trace_path`` when set and
    the method produces one.
    """
    cfg.validate()
    task = CellTask(
        index=0,
        experiment="toy" if cfg.family == "toy" else "single",
        methods=(cfg.method,),
        recoveries=(cfg.recovery,),
        budget=cfg.resolved_budget(),
        sample_seed=sample_seed_for(cfg.master_seed, 0),
        admm=_admm_dict(cfg),
        family=cfg.family,
        t=cfg.t,
        n=cfg.n,
        k=cfg.resolved_k(),
        xi=cfg.xi_single,
        collect_trace=True,
    )
    rows, traces = run_cell(task)
    row = rows[0]
    if row["status"].startswith("error"):
        raise RuntimeError(f"single run failed with {row['status']}")
    trace = traces.get((cfg.method, cfg.recovery))
    if cfg.trace_path and trace is not None:
        trace.to_csv(cfg.trace_path)
    report = RecoveryReport(
        rho_total=row["rho_total"],
        rho_diag=row["rho_diag"],
        mvp_cost=row["mvp_cost"],
        iterations=row["iterations"],
        runtime_s=row["runtime_s"],
    )
    return report, trace, rows


def run_bounds(n, k_max=0, output=""):
    """Tabulate the closed-form toy bounds for k = 1..k_max."""
    if n < 2:
        raise ConfigError(f"bounds need N >= 2, got {n}")
    k_max = k_max if k_max > 0 else n
    if k_max > n:
        raise ConfigError(f"k_max={k_max} exceeds N={n}")
    rows = []
    for k in range(1, k_max + 1):
        b = toy_bounds(n, k)
        rows.append({"N": n, "k": k, **b})
    if output:
        with open(output, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(BOUNDS_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(row[col]) for col in BOUNDS_COLUMNS])
    return rows
