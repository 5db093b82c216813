"""Benchmark harness: clustered dictionaries, exact-recovery trials and lambda sweeps.

Every trial draws its own random stream from ``SeedSequence(seed).spawn``,
so results do not depend on how trials are distributed over workers.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .core import Dictionary
from .exceptions import ConfigurationError, GenerationFailure, SparseDualityError
from .lambda_learn import learn_lambda_type1
from .penalties import PenaltyFamily
from .type1 import Type1Options, solve_type1
from .type2 import NoiselessOptions, solve_type2_noiseless
from .wl1 import WL1Mode, WL1Problem, solve_wl1

JOBS_ENV = "SPARSE_DUALITY_JOBS"


# ---------------------------------------------------------------------------
# Clustered dictionaries
# ---------------------------------------------------------------------------

@dataclass
class ClusterSpec:
    """Base dictionary size, cluster sizes and the maximal intra-cluster angle.

    ``cluster_sizes`` may be a single integer, applied to every base column.
    """

    base_n: int
    base_d: int
    cluster_sizes: list[int] | int = 2
    epsilon: float = 0.05
    seed: int = 0
    rank_samples: int = 50

    def __post_init__(self):
        if isinstance(self.cluster_sizes, (int, np.integer)):
            self.cluster_sizes = [int(self.cluster_sizes)] * int(self.base_d)
        self.cluster_sizes = [int(c) for c in self.cluster_sizes]
        errors = []
        if self.base_n < 1 or self.base_d < 1:
            errors.append("base_n and base_d must be positive")
        if len(self.cluster_sizes) != self.base_d:
            errors.append(f"cluster_sizes has {len(self.cluster_sizes)} entries, expected {self.base_d}")
        if any(c < 1 for c in self.cluster_sizes):
            errors.append("cluster sizes must be at least 1")
        if not self.epsilon > 0:
            errors.append("epsilon must be positive")
        if errors:
            raise ConfigurationError("; ".join(errors))

    @property
    def m(self) -> int:
        return int(sum(self.cluster_sizes))


def _unit_columns(mat):
    return mat / np.linalg.norm(mat, axis=0)


def _max_cluster_angle(phi, cluster_map):
    worst = 0.0
    for c in np.unique(cluster_map):
        cols = phi[:, cluster_map == c]
        if cols.shape[1] > 1:
            cos = np.clip(cols.T @ cols, -1.0, 1.0)
            worst = max(worst, float(np.max(np.arccos(cos))))
    return worst


def _sampled_full_rank(phi, samples, rng):
    n, m = phi.shape
    k = min(n, m)
    for _ in range(samples):
        cols = rng.choice(m, size=k, replace=False)
        if np.linalg.matrix_rank(phi[:, cols]) < k:
            return False
    return True


def clustered_dictionary(spec: ClusterSpec, rng=None, max_rounds: int = 100):
    """Return ``(dictionary, base)`` where ``base`` is the un-clustered matrix."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n = spec.base_n
    base = _unit_columns(rng.standard_normal((n, spec.base_d)))
    sizes = np.asarray(spec.cluster_sizes)
    cluster_map = np.repeat(np.arange(spec.base_d), sizes)
    if np.all(sizes == 1):
        return Dictionary(base, cluster_map=cluster_map), base
    # ||delta r|| is about delta, and two members differ by roughly sqrt(2) delta
    delta = spec.epsilon / 2.0
    for _ in range(max_rounds):
        cols = []
        for j, size in enumerate(sizes):
            if size == 1:
                cols.append(base[:, [j]])
            else:
                pert = rng.standard_normal((n, size)) / math.sqrt(n)
                cols.append(_unit_columns(base[:, [j]] + delta * pert))
        phi = np.hstack(cols)
        if (_max_cluster_angle(phi, cluster_map) < spec.epsilon
                and _sampled_full_rank(phi, spec.rank_samples, rng)):
            return Dictionary(phi, cluster_map=cluster_map), base
        delta *= 0.8
    raise GenerationFailure(f"no dictionary met the angle and rank checks in {max_rounds} rounds")


def gen_clustered_dictionary(spec: ClusterSpec) -> Dictionary:
    """Replace each base column by a tight cluster of ``m_i`` normalized perturbations.

    The base is iid Gaussian with unit columns. Members are
    ``normalize(b + delta * r)``; ``delta`` shrinks until every
    intra-cluster angle is below ``epsilon`` and sampled square
    submatrices are full rank.

    Raises
    ------
    GenerationFailure
        After 100 rejected rounds.
    """
    return clustered_dictionary(spec)[0]


# ---------------------------------------------------------------------------
# Exact recovery
# ---------------------------------------------------------------------------

@dataclass
class RecoveryParams:
    """Planted-support settings for the recovery experiment."""

    n_active: int = 4
    trials: int = 200
    seed: int = 0
    min_cluster_sum: float = 0.1
    zero_sum_clusters: bool = False

    def validate(self, spec: ClusterSpec):
        errors = []
        if self.zero_sum_clusters:
            errors.append("zero_sum_clusters: planted clusters must have nonzero coefficient sums")
        if self.trials < 1:
            errors.append("trials must be at least 1")
        if not 1 <= self.n_active <= spec.base_d:
            errors.append(f"n_active must be in [1, {spec.base_d}]")
        elif sum(sorted(spec.cluster_sizes)[-self.n_active:]) > spec.base_n:
            errors.append("the largest n_active clusters hold more than base_n columns")
        if self.min_cluster_sum <= 0:
            errors.append("min_cluster_sum must be positive")
        if errors:
            raise ConfigurationError("; ".join(errors))


@dataclass
class SolverParams:
    q: float = 1.0
    alpha0: float | None = None
    alpha_decay: float = 0.1
    alpha_min: float = 1e-10
    max_iters: int = 30
    success_tol: float = 1e-4
    support_tol: float = 1e-8

    def noiseless_options(self) -> NoiselessOptions:
        return NoiselessOptions(max_iters=self.max_iters, alpha0=self.alpha0,
                                alpha_decay=self.alpha_decay, alpha_min=self.alpha_min)


@dataclass
class RecoveryTrial:
    trial: int
    x0: np.ndarray
    omega0: list[int]
    n_active_columns: int
    cluster_sums: list[float]
    success_l1: bool
    success_type2: bool
    error_l1: float
    error_type2: float
    residual_l1: float
    residual_type2: float
    base_l1_success: bool
    type2_iterations: int = 0
    note: str = ""


def _support(x, tol):
    scale = np.max(np.abs(x)) if x.size else 0.0
    return np.abs(x) > tol * scale if scale > 0 else np.zeros(x.shape, bool)


def _recovered(x, x0, params: SolverParams):
    err = float(np.linalg.norm(x - x0) / np.linalg.norm(x0))
    same = np.array_equal(_support(x, params.support_tol), _support(x0, params.support_tol))
    return err < params.success_tol and same, err


def _plant(spec: ClusterSpec, cluster_map, params: RecoveryParams, rng):
    omega = np.sort(rng.choice(spec.base_d, size=params.n_active, replace=False))
    x0 = np.zeros(cluster_map.size)
    sums = []
    for c in omega:
        idx = np.flatnonzero(cluster_map == c)
        while True:
            v = rng.standard_normal(idx.size)
            if abs(v.sum()) >= params.min_cluster_sum:
                break
        x0[idx] = v
        sums.append(float(v.sum()))
    return x0, omega, sums


def _recovery_trial(spec: ClusterSpec, params: RecoveryParams, solver: SolverParams,
                    index: int, seed_seq) -> RecoveryTrial:
    rng = np.random.default_rng(seed_seq)
    d, base = clustered_dictionary(spec, rng)
    phi = d.matrix
    x0, omega, sums = _plant(spec, d.cluster_map, params, rng)
    y = phi @ x0

    # collapse each active cluster onto its base column to check the l1 premise
    c0 = np.zeros(spec.base_d)
    c0[omega] = sums
    try:
        cb = solve_wl1(WL1Problem(base, base @ c0, np.ones(spec.base_d)), tol=1e-9)
        base_ok = _recovered(cb, c0, solver)[0]
    except SparseDualityError:
        base_ok = False

    notes = []
    try:
        x_l1 = solve_wl1(WL1Problem(phi, y, np.ones(phi.shape[1])), tol=1e-9)
    except SparseDualityError as exc:
        x_l1 = np.zeros_like(x0)
        notes.append(f"l1: {exc}")
    try:
        rep = solve_type2_noiseless(phi, y, q=solver.q, opts=solver.noiseless_options())
        x2, iters = rep.x_hat, rep.iterations
    except SparseDualityError as exc:
        x2, iters = np.zeros_like(x0), 0
        notes.append(f"type2: {exc}")
    ok1, e1 = _recovered(x_l1, x0, solver)
    ok2, e2 = _recovered(x2, x0, solver)
    return RecoveryTrial(index, x0, omega.tolist(), int(np.count_nonzero(x0)), sums, ok1, ok2,
                         e1, e2, float(np.linalg.norm(phi @ x_l1 - y)),
                         float(np.linalg.norm(phi @ x2 - y)), base_ok, iters, "; ".join(notes))


@dataclass
class RecoveryResult:
    trials: list[RecoveryTrial]
    summary: dict


def _summarize_recovery(trials: list[RecoveryTrial]) -> dict:
    k = len(trials)
    l1 = sum(t.success_l1 for t in trials)
    t2 = sum(t.success_type2 for t in trials)
    return {
        "trials": k,
        "l1_rate": l1 / k,
        "type2_rate": t2 / k,
        "dominance_violations": sum(t.success_l1 and not t.success_type2 for t in trials),
        "base_l1_rate": sum(t.base_l1_success for t in trials) / k,
        "solver_failures": sum(bool(t.note) for t in trials),
    }


def resolve_jobs(jobs: int | None = None) -> int:
    """Worker count from the argument, then ``SPARSE_DUALITY_JOBS``, then 1."""
    if jobs is None:
        env = os.environ.get(JOBS_ENV)
        jobs = int(env) if env else 1
    if jobs < 1:
        raise ConfigurationError("jobs must be at least 1")
    return int(jobs)


def _call_single_threaded(fn, *args):
    with threadpool_limits(limits=1):
        return fn(*args)


def _map_trials(fn, arg_list, jobs):
    if jobs == 1 or len(arg_list) <= 1:
        return [_call_single_threaded(fn, *a) for a in arg_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_call_single_threaded, fn, *a) for a in arg_list]
        return [f.result() for f in futures]


def run_recovery_experiment(spec: ClusterSpec, params: RecoveryParams | None = None,
                            solver: SolverParams | None = None,
                            jobs: int | None = None) -> RecoveryResult:
    """Plain l1 versus noiseless Type II on planted clustered problems.

    Each trial draws a fresh dictionary and a planted ``x0`` whose active
    clusters have coefficient sums of magnitude at least
    ``min_cluster_sum``. Success means relative error below
    ``success_tol`` and an identical support.
    """
    params = params or RecoveryParams()
    solver = solver or SolverParams()
    params.validate(spec)
    seeds = np.random.SeedSequence(params.seed).spawn(params.trials)
    args = [(spec, params, solver, i, s) for i, s in enumerate(seeds)]
    trials = _map_trials(_recovery_trial, args, resolve_jobs(jobs))
    return RecoveryResult(trials, _summarize_recovery(trials))


# ---------------------------------------------------------------------------
# Lambda sweep
# ---------------------------------------------------------------------------

def _parse_snr(value):
    if value is None:
        return math.inf
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "none"):
            return math.inf
        return float(value)
    return float(value)


@dataclass
class ExperimentConfig:
    """Settings of the lambda sweep on random Gaussian dictionaries."""

    n: int = 100
    m: int = 50
    k0: int = 10
    snr_db: float = 0.0
    lambda_grid: list[float] = field(
        default_factory=lambda: np.logspace(-4, 1, 50).tolist())
    trials: int = 100
    penalties: list[str] = field(default_factory=lambda: ["lp:0.01", "lp:1"])
    seed: int = 0
    type1_max_iters: int = 200

    def __post_init__(self):
        self.snr_db = _parse_snr(self.snr_db)
        self.lambda_grid = [float(v) for v in self.lambda_grid]
        self.penalties = [str(PenaltyFamily.parse(p)) for p in self.penalties]
        errors = []
        for name in ("n", "m", "k0", "trials", "type1_max_iters"):
            if int(getattr(self, name)) < 1:
                errors.append(f"{name}: must be a positive integer")
        if self.k0 > self.m:
            errors.append("k0: must not exceed m")
        grid = np.asarray(self.lambda_grid)
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            errors.append("lambda_grid: must be positive and strictly increasing")
        if not self.penalties:
            errors.append("penalties: at least one penalty is required")
        if errors:
            raise ConfigurationError("; ".join(errors))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["snr_db"] = "inf" if math.isinf(self.snr_db) else self.snr_db
        return out


def _sweep_problem(config: ExperimentConfig, rng):
    phi = _unit_columns(rng.standard_normal((config.n, config.m)))
    x0 = np.zeros(config.m)
    x0[rng.choice(config.m, size=config.k0, replace=False)] = rng.standard_normal(config.k0)
    signal = phi @ x0
    noise = rng.standard_normal(config.n)
    if math.isinf(config.snr_db):
        noise[:] = 0.0
    else:
        # scale this realization to hit the target SNR exactly
        noise *= np.linalg.norm(signal) / (np.linalg.norm(noise) * 10.0 ** (config.snr_db / 20.0))
    return phi, x0, signal + noise


def _nmse(x, x0):
    return float(np.sum((x - x0) ** 2) / np.linalg.norm(x0))


def _l0(x):
    scale = np.max(np.abs(x))
    return int(np.count_nonzero(np.abs(x) > 1e-6 * scale)) if scale > 0 else 0


def _sweep_trial(config: ExperimentConfig, index: int, seed_seq):
    rng = np.random.default_rng(seed_seq)
    phi, x0, y = _sweep_problem(config, rng)
    opts = Type1Options(max_iters=config.type1_max_iters)
    out = {}
    for name in config.penalties:
        pen = PenaltyFamily.parse(name)
        mse = np.empty(len(config.lambda_grid))
        l0 = np.empty(len(config.lambda_grid), dtype=int)
        for j, lam in enumerate(config.lambda_grid):
            x = solve_type1(phi, pen, lam, y, opts).x_hat
            mse[j] = _nmse(x, x0)
            l0[j] = _l0(x)
        est = learn_lambda_type1(phi, pen, y)
        out[name] = (mse, l0, est.lambda_star, _nmse(est.x_star, x0), _l0(est.x_star))
    return out


@dataclass
class SweepResult:
    config: ExperimentConfig
    mse: dict[str, np.ndarray]
    l0: dict[str, np.ndarray]
    learned: dict[str, dict]
    per_trial: list[dict]


def run_lambda_sweep(config: ExperimentConfig, jobs: int | None = None) -> SweepResult:
    """Type I error and sparsity across a lambda grid, plus learned-lambda points.

    For each penalty the grid curves average the normalized error
    ``||x - x_hat||^2 / ||x||`` and ``||x_hat||_0`` (entries above
    ``1e-6 * max|x_hat|``) over trials. The learned-lambda row averages
    the estimate of :func:`learn_lambda_type1` and the error of its
    coefficients.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.trials)
    rows = _map_trials(_sweep_trial, [(config, i, s) for i, s in enumerate(seeds)],
                       resolve_jobs(jobs))
    mse, l0, learned = {}, {}, {}
    for name in config.penalties:
        # fixed trial order keeps the sums bit-reproducible
        mse[name] = np.mean(np.stack([r[name][0] for r in rows]), axis=0)
        l0[name] = np.mean(np.stack([r[name][1] for r in rows]).astype(float), axis=0)
        learned[name] = {
            "mean_lambda": float(np.mean([r[name][2] for r in rows])),
            "mse": float(np.mean([r[name][3] for r in rows])),
            "mean_l0": float(np.mean([r[name][4] for r in rows])),
        }
    return SweepResult(config, mse, l0, learned, rows)


# ---------------------------------------------------------------------------
# CSV output and run directories
# ---------------------------------------------------------------------------

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    return buf.getvalue()


def sweep_tables(result: SweepResult) -> dict[str, str]:
    """CSV text keyed by file name: ``mse_vs_lambda.csv``, ``l0_vs_lambda.csv``,
    ``learned_lambda.csv``."""
    names = result.config.penalties
    grid = result.config.lambda_grid
    header = ["lambda"] + names
    mse_rows = [[lam] + [result.mse[p][j] for p in names] for j, lam in enumerate(grid)]
    l0_rows = [[lam] + [result.l0[p][j] for p in names] for j, lam in enumerate(grid)]
    learned_rows = [[p, result.learned[p]["mean_lambda"], result.learned[p]["mse"],
                     result.learned[p]["mean_l0"]] for p in names]
    return {
        "mse_vs_lambda.csv": _csv_text(header, mse_rows),
        "l0_vs_lambda.csv": _csv_text(header, l0_rows),
        "learned_lambda.csv": _csv_text(["penalty", "mean_lambda", "mse", "mean_l0"],
                                        learned_rows),
    }


def recovery_tables(result: RecoveryResult) -> dict[str, str]:
    """CSV text for ``trials.csv`` and ``summary.csv``."""
    header = ["trial", "omega0", "n_active_columns", "cluster_sums", "success_l1",
              "success_type2", "error_l1", "error_type2", "residual_l1", "residual_type2",
              "base_l1_success", "type2_iterations", "note"]
    rows = [[t.trial, ";".join(map(str, t.omega0)), t.n_active_columns,
             ";".join(repr(s) for s in t.cluster_sums), int(t.success_l1),
             int(t.success_type2), t.error_l1, t.error_type2, t.residual_l1,
             t.residual_type2, int(t.base_l1_success), t.type2_iterations, t.note]
            for t in result.trials]
    summary = [[k, v] for k, v in result.summary.items()]
    return {"trials.csv": _csv_text(header, rows),
            "summary.csv": _csv_text(["metric", "value"], summary)}


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


__all__ = ["ClusterSpec", "gen_clustered_dictionary", "clustered_dictionary", "RecoveryParams",
           "SolverParams", "RecoveryTrial", "RecoveryResult", "run_recovery_experiment",
           "ExperimentConfig", "SweepResult", "run_lambda_sweep", "sweep_tables",
           "recovery_tables", "config_hash", "atomic_write", "resolve_jobs", "JOBS_ENV"]
