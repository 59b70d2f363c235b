"""Sweep harness: seeded trials over kernels and lengthscales, with CSV output.

Each trial draws N paths from a discretized kernel, forms the sample, tapered
and thresholded estimates, and records relative spectral errors against the
truth.  Trials are independently seeded so any execution schedule yields the
same records; aggregation and serialization are single threaded.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.stats

from .errors import UsageError
from .diagnostics import NuSequence, operator_quantities, spectral_norm
from .estimators import EstimatorConfig, adaptive_threshold, choose_kappa, taper_estimate, threshold_estimate
from .grid_kernel import (
    CovMatrix,
    Grid,
    KernelSpec,
    Matern,
    Periodic,
    Permuted,
    SquaredExponential,
    build_grid,
    discretize,
    fisher_yates_permutation,
)
from .sampling import SampleSet, cholesky_psd, draw_paths, sample_cov

__all__ = [
    "KernelTemplate",
    "ExperimentConfig",
    "TrialRecord",
    "SummaryRow",
    "SweepResult",
    "TRIAL_HEADER",
    "SUMMARY_HEADER",
    "n_for_lambda",
    "trial_seed",
    "run_trial",
    "run_sweep",
    "summarize",
    "emit_csv",
    "load_trials",
    "load_summaries",
]

_KERNEL_NAMES = ("se", "matern", "periodic", "permuted")
_NU_SOURCES = ("default", "se", "exp", "numeric")

TRIAL_HEADER = "kernel,lambda,d,L,N,trial,seed,kappa,rho_hat,err_sample,err_taper,err_thresh"
SUMMARY_HEADER = "kernel,lambda,N,trials,mean_sample,ci_sample,mean_taper,ci_taper,mean_thresh,ci_thresh"


@dataclass(frozen=True)
class KernelTemplate:
    """A kernel family with the lengthscale left free.

    'permuted' wraps the squared-exponential base in a fresh grid shuffle
    drawn from each trial's seed.  nu_source picks the tail sequence used
    for the taper radius: 'default' maps matern to the exponential form and
    the rest to the d=1 closed form.
    """

    name: str
    smoothness: float = 1.5
    period: float = 0.4
    nu_source: str = "default"

    def __post_init__(self) -> None:
        if self.name not in _KERNEL_NAMES:
            raise UsageError(
                f"kernel must be one of {_KERNEL_NAMES}, got {self.name!r}"
            )
        if self.nu_source not in _NU_SOURCES:
            raise UsageError(
                f"nu_source must be one of {_NU_SOURCES}, got {self.nu_source!r}"
            )


@dataclass(frozen=True)
class ExperimentConfig:
    """A full sweep: kernels x lengthscales x trials.

    The sample count follows N = ceil(n_mult * ln(lambda^-d)) per
    lengthscale (natural log).  norm_tol is forwarded to the spectral norm;
    error in the norm value is quadratic in this residual tolerance, so the
    default leaves ~12 accurate digits.
    """

    kernels: tuple
    lambda_grid: tuple
    L: int = 1250
    d: int = 1
    trials: int = 30
    n_mult: float = 5.0
    c0: float = 2.0
    base_seed: int = 0
    norm_tol: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "kernels", tuple(self.kernels))
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        if not self.kernels:
            raise UsageError("config needs at least one kernel")
        if not self.lambda_grid:
            raise UsageError("config needs at least one lengthscale")
        for lam in self.lambda_grid:
            if not (0.0 < lam < 1.0):
                raise UsageError(f"lengthscales must lie in (0, 1), got {lam}")
        if self.trials < 1:
            raise UsageError(f"trials must be >= 1, got {self.trials}")
        if not self.n_mult > 0:
            raise UsageError(f"n_mult must be > 0, got {self.n_mult}")
        if self.base_seed < 0:
            raise UsageError(f"base_seed must be >= 0, got {self.base_seed}")
        for lam in self.lambda_grid:
            if n_for_lambda(self, lam) < 1:
                raise UsageError(f"sample rule gives N < 1 at lambda={lam}")


@dataclass(frozen=True)
class TrialRecord:
    kernel: str
    lam: float
    d: int
    L: int
    N: int
    trial: int
    seed: int
    kappa: float
    rho_hat: float
    err_sample: float
    err_taper: float
    err_thresh: float
    r_eff: float  # of the true discretized kernel; not persisted to CSV


@dataclass(frozen=True)
class SummaryRow:
    kernel: str
    lam: float
    N: int
    trials: int
    mean_sample: float
    ci_sample: Optional[float]
    mean_taper: float
    ci_taper: Optional[float]
    mean_thresh: float
    ci_thresh: Optional[float]


@dataclass(frozen=True)
class SweepResult:
    records: tuple
    failures: tuple

    @property
    def ok(self) -> bool:
        return not self.failures


def n_for_lambda(cfg: ExperimentConfig, lam: float) -> int:
    """Sample count N = ceil(n_mult * ln(lambda^-d))."""
    return int(math.ceil(cfg.n_mult * cfg.d * math.log(1.0 / lam)))


def trial_seed(cfg: ExperimentConfig, kernel_index: int, lambda_index: int, trial: int):
    """Derive the (draw, shuffle) seeds for one trial from the base seed.

    Seeds are taken from disjoint substreams keyed by position in the sweep
    grid, so adding kernels or lengthscales never shifts existing trials.
    """
    ss = np.random.SeedSequence(
        entropy=cfg.base_seed, spawn_key=(kernel_index, lambda_index, trial)
    )
    draw, shuffle = (int(v) for v in ss.generate_state(2, np.uint64))
    return draw, shuffle


def _kernel_for(template: KernelTemplate, lam: float) -> KernelSpec:
    """Concrete kernel at the given lengthscale; the permuted base only."""
    if template.name == "se" or template.name == "permuted":
        return SquaredExponential(lengthscale=lam)
    if template.name == "matern":
        return Matern(lengthscale=lam, smoothness=template.smoothness)
    return Periodic(lengthscale=lam, period=template.period)


def _nu_for(template: KernelTemplate, d: int) -> NuSequence:
    source = template.nu_source
    if source == "default":
        source = "exp" if template.name == "matern" else "se"
    if source == "se":
        if d != 1:
            raise UsageError("the closed-form gaussian tail sequence is d=1 only")
        return NuSequence.se_d1()
    if source == "exp":
        return NuSequence.exponential()
    if template.name == "matern":
        return NuSequence.numeric(Matern(lengthscale=1.0, smoothness=template.smoothness), d)
    if template.name == "periodic":
        raise UsageError("the periodic kernel has no radial tail profile; use 'se' or 'exp'")
    return NuSequence.numeric(SquaredExponential(lengthscale=1.0), d)


@dataclass(frozen=True)
class _Prep:
    """Shared per-(kernel, lengthscale) state: truth, factor, taper radius."""

    grid: Grid
    C: CovMatrix
    factor: object
    norm: float
    r_eff: float
    kappa: float
    N: int


def _build_prep(template: KernelTemplate, lam: float, cfg: ExperimentConfig) -> _Prep:
    grid = build_grid(cfg.d, cfg.L)
    C = discretize(_kernel_for(template, lam), grid)
    factor = cholesky_psd(C)
    quant = operator_quantities(C, tol=cfg.norm_tol)
    N = n_for_lambda(cfg, lam)
    kappa = choose_kappa(_nu_for(template, cfg.d), N, cfg.d, lam)
    return _Prep(
        grid=grid, C=C, factor=factor, norm=quant.op_norm / C.grid_h,
        r_eff=quant.r_eff, kappa=kappa, N=N,
    )


def _template_index(cfg: ExperimentConfig, template: KernelTemplate) -> int:
    for i, t in enumerate(cfg.kernels):
        if t == template:
            return i
    raise UsageError(f"kernel template {template.name!r} is not part of the config")


def _lambda_index(cfg: ExperimentConfig, lam: float) -> int:
    for i, v in enumerate(cfg.lambda_grid):
        if v == lam:
            return i
    raise UsageError(f"lengthscale {lam!r} is not on the config grid")


def run_trial(
    template: KernelTemplate,
    lam: float,
    cfg: ExperimentConfig,
    trial_index: int,
    prep: Optional[_Prep] = None,
) -> TrialRecord:
    """One seeded trial: draw, estimate three ways, record relative errors.

    The permuted kernel shuffles path coordinates of the base draw with the
    trial's own permutation; the law matches factoring the shuffled matrix
    directly, and the base factorization is shared across trials.
    """
    if trial_index < 0:
        raise UsageError(f"trial index must be >= 0, got {trial_index}")
    k_idx = _template_index(cfg, template)
    l_idx = _lambda_index(cfg, lam)
    if prep is None:
        prep = _build_prep(template, lam, cfg)
    draw_seed, shuffle_seed = trial_seed(cfg, k_idx, l_idx, trial_index)
    grid, N = prep.grid, prep.N

    base = draw_paths(prep.factor, N, draw_seed)
    if template.name == "permuted":
        perm = fisher_yates_permutation(grid.n, shuffle_seed)
        truth = CovMatrix(
            entries=prep.C.entries[np.ix_(perm, perm)], grid_h=prep.C.grid_h
        )
        S = SampleSet(paths=base.paths[:, perm], seed=draw_seed, grid_h=grid.h)
    else:
        truth = prep.C
        S = base

    Chat = sample_cov(S)
    rho_hat = adaptive_threshold(
        S, EstimatorConfig(c0=cfg.c0, k_inf_mode="plugin_max_diag")
    )
    tapered = taper_estimate(Chat, prep.kappa, grid)
    # The signed-sup mean can go negative at tiny N; keep-if |entry| >= level
    # then keeps every entry, so the estimate coincides with level zero.  The
    # record still carries the raw level.
    thresholded = threshold_estimate(Chat, max(rho_hat, 0.0))

    def rel(est: CovMatrix) -> float:
        return spectral_norm(est.entries - truth.entries, tol=cfg.norm_tol) / prep.norm

    return TrialRecord(
        kernel=template.name, lam=lam, d=cfg.d, L=cfg.L, N=N, trial=trial_index,
        seed=draw_seed, kappa=prep.kappa, rho_hat=rho_hat,
        err_sample=rel(Chat), err_taper=rel(tapered), err_thresh=rel(thresholded),
        r_eff=prep.r_eff,
    )


def run_sweep(
    cfg: ExperimentConfig,
    threads: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> SweepResult:
    """Run the full kernels x lengthscales x trials grid.

    Records come back in canonical (kernel, lengthscale, trial) grid order
    no matter how many worker threads execute them.  A failed trial is
    reported in the failures trailer and does not stop the rest.
    """
    if threads < 1:
        raise UsageError(f"threads must be >= 1, got {threads}")
    preps = {}
    for ki, template in enumerate(cfg.kernels):
        for li, lam in enumerate(cfg.lambda_grid):
            preps[(ki, li)] = _build_prep(template, lam, cfg)

    tasks = [
        (ki, li, trial, template, lam)
        for ki, template in enumerate(cfg.kernels)
        for li, lam in enumerate(cfg.lambda_grid)
        for trial in range(cfg.trials)
    ]

    def _one(task):
        ki, li, trial, template, lam = task
        return run_trial(template, lam, cfg, trial, prep=preps[(ki, li)])

    outcomes = {}
    if threads == 1:
        for task in tasks:
            try:
                outcomes[task[:3]] = _one(task)
            except Exception as exc:  # noqa: BLE001 - trailer reports, sweep continues
                outcomes[task[:3]] = exc
            if progress is not None:
                progress(_progress_line(task, outcomes[task[:3]]))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {task[:3]: pool.submit(_one, task) for task in tasks}
        for task in tasks:
            fut = futures[task[:3]]
            exc = fut.exception()
            outcomes[task[:3]] = fut.result() if exc is None else exc
            if progress is not None:
                progress(_progress_line(task, outcomes[task[:3]]))

    records = []
    failures = []
    for task in tasks:
        out = outcomes[task[:3]]
        if isinstance(out, TrialRecord):
            records.append(out)
        else:
            _, _, trial, template, lam = task
            failures.append(
                f"kernel={template.name} lambda={lam!r} trial={trial}: {out}"
            )
    return SweepResult(records=tuple(records), failures=tuple(failures))


def _progress_line(task, outcome) -> str:
    ki, li, trial, template, lam = task
    tag = "ok" if isinstance(outcome, TrialRecord) else "FAIL"
    return f"trial kernel={template.name} lambda={lam!r} trial={trial} {tag}"


def summarize(records: Sequence[TrialRecord]) -> list:
    """Per-(kernel, lengthscale) means and 95% Student-t half-widths.

    Groups with a single trial get a missing marker instead of a width.
    """
    if not records:
        return []
    groups = {}
    for rec in records:
        groups.setdefault((rec.kernel, rec.lam), []).append(rec)
    rows = []
    for (kernel, lam), recs in groups.items():
        T = len(recs)
        Ns = {r.N for r in recs}
        if len(Ns) != 1:
            raise UsageError(
                f"group kernel={kernel} lambda={lam!r} mixes sample counts {sorted(Ns)}"
            )
        means = {}
        cis = {}
        for field in ("err_sample", "err_taper", "err_thresh"):
            vals = np.array([getattr(r, field) for r in recs], dtype=np.float64)
            means[field] = float(np.mean(vals))
            if T < 2:
                cis[field] = None
            else:
                half = scipy.stats.t.ppf(0.975, T - 1) * float(np.std(vals, ddof=1)) / math.sqrt(T)
                cis[field] = float(half)
        rows.append(SummaryRow(
            kernel=kernel, lam=lam, N=Ns.pop(), trials=T,
            mean_sample=means["err_sample"], ci_sample=cis["err_sample"],
            mean_taper=means["err_taper"], ci_taper=cis["err_taper"],
            mean_thresh=means["err_thresh"], ci_thresh=cis["err_thresh"],
        ))
    rows.sort(key=lambda r: (r.kernel, r.lam))
    return rows


def _fmt(value) -> str:
    if value is None:
        return "na"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(rows: Sequence, path, kind: Optional[str] = None) -> None:
    """Write trial or summary rows in canonical order, shortest decimals.

    kind ('trials' or 'summary') is inferred from the first row; it must be
    given explicitly for an empty list.
    """
    if kind is None:
        if not rows:
            raise UsageError("emit_csv needs an explicit kind for an empty row list")
        kind = "trials" if isinstance(rows[0], TrialRecord) else "summary"
    if kind not in ("trials", "summary"):
        raise UsageError(f"kind must be 'trials' or 'summary', got {kind!r}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if kind == "trials":
            writer.writerow(TRIAL_HEADER.split(","))
            for rec in sorted(rows, key=lambda r: (r.kernel, r.lam, r.trial)):
                writer.writerow([
                    rec.kernel, _fmt(rec.lam), rec.d, rec.L, rec.N, rec.trial,
                    rec.seed, _fmt(rec.kappa), _fmt(rec.rho_hat),
                    _fmt(rec.err_sample), _fmt(rec.err_taper), _fmt(rec.err_thresh),
                ])
        else:
            writer.writerow(SUMMARY_HEADER.split(","))
            for row in sorted(rows, key=lambda r: (r.kernel, r.lam)):
                writer.writerow([
                    row.kernel, _fmt(row.lam), row.N, row.trials,
                    _fmt(row.mean_sample), _fmt(row.ci_sample),
                    _fmt(row.mean_taper), _fmt(row.ci_taper),
                    _fmt(row.mean_thresh), _fmt(row.ci_thresh),
                ])


def load_trials(path) -> list:
    """Parse a trials CSV back to records (r_eff is not persisted: NaN)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRIAL_HEADER.split(","):
            raise UsageError(f"unexpected trials header in {path}")
        for row in reader:
            out.append(TrialRecord(
                kernel=row["kernel"], lam=float(row["lambda"]), d=int(row["d"]),
                L=int(row["L"]), N=int(row["N"]), trial=int(row["trial"]),
                seed=int(row["seed"]), kappa=float(row["kappa"]),
                rho_hat=float(row["rho_hat"]), err_sample=float(row["err_sample"]),
                err_taper=float(row["err_taper"]), err_thresh=float(row["err_thresh"]),
                r_eff=math.nan,
            ))
    return out


def load_summaries(path) -> list:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SUMMARY_HEADER.split(","):
            raise UsageError(f"unexpected summary header in {path}")
        for row in reader:
            def ci(name):
                return None if row[name] == "na" else float(row[name])
            out.append(SummaryRow(
                kernel=row["kernel"], lam=float(row["lambda"]), N=int(row["N"]),
                trials=int(row["trials"]),
                mean_sample=float(row["mean_sample"]), ci_sample=ci("ci_sample"),
                mean_taper=float(row["mean_taper"]), ci_taper=ci("ci_taper"),
                mean_thresh=float(row["mean_thresh"]), ci_thresh=ci("ci_thresh"),
            ))
    return out
