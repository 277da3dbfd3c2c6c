"""End-to-end recovery experiments with seeded, bit-reproducible records.

Four experiment kinds share one config and record format:

  exact        sparse measures on the code, equality-constrained recovery,
               error vs sparsity sweep
  tau-sweep    off-code measures, ball-constrained recovery across a tau
               grid, numerical-sparsity plateau detection
  approx       off-code measures at several offset angles, error curve at
               the plateau-selected tau
  consistency  nested codes of doubling size, per-level degree/sample-count
               selection, thresholded recovery, Wasserstein error per level

Records exclude wall-clock fields from the CSV so reruns are byte-identical;
timings stay on the in-memory records only.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .analysis import DELTA_CRITICAL, mse_bound, theorem_b_sample_bound
from .l1 import solve_bp, solve_bpdn
from .measures import DiscreteMeasure
from .moments import build_ensemble, build_joint_ensemble, moments_of
from .sphere_codes import (
    SphericalCode,
    make_circle_code,
    make_e8_code,
    nearest_code_projection,
    theta_of,
)
from .transport import wasserstein, wasserstein_upper_bound_via_l1

__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "TauSelection",
    "SelectorInfeasible",
    "ExperimentResult",
    "load_config",
    "make_code",
    "numerical_sparsity",
    "default_sparsity_threshold",
    "threshold_and_normalize",
    "run_exact_recovery",
    "k_of_tau",
    "select_tau",
    "tau_sweep",
    "run_approx_recovery",
    "run_consistency",
    "run_experiment",
    "write_records_csv",
]

KINDS = ("exact", "approx", "tau-sweep", "consistency")
POLICIES = ("threshold-normalize", "clamp")

DEFAULT_TAU_GRID = tuple(float(t) for t in np.linspace(0.0, 0.1, 21))
DEFAULT_APPROX_OFFSETS = tuple(float(t) for t in np.linspace(0.0, math.pi / 200, 9))
# Atoms a third of a cell off the base grid stay a third of a cell off every
# doubled grid (the doubling map fixes 1/3), which maximizes the worst-case
# approximability margin across levels.
DEFAULT_CONSISTENCY_ANGLES = tuple(
    (2.0 * math.pi / 25.0) * (i + 1.0 / 3.0) for i in (2, 9, 17)
)
DEFAULT_CONSISTENCY_WEIGHTS = (0.5, 0.3, 0.2)

CSV_HEADER = (
    "kind",
    "cell",
    "trial",
    "seed_index",
    "status",
    "iterations",
    "residual_norm",
    "l1_value",
    "tau",
    "error",
    "k_tau",
    "truth",
    "solution",
)

SUCCESS_ERROR = 1e-5  # exact-recovery success cutoff used in summaries


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment run."""

    kind: str
    seed: int = 0
    trials: int = 50
    workers: int = 1
    failure_budget: float = 0.05
    code_kind: str = "circle"
    code_size: int = 200
    code_offset: float = 0.0
    d: int | None = None
    m: int | None = None
    k: int = 3
    k_min: int = 1
    k_max: int = 10
    atom_offset: float = math.pi / 2400.0
    sparsity_rel_threshold: float | None = None
    tau_grid: tuple = DEFAULT_TAU_GRID
    epsilon: float = 0.1
    offsets: tuple = DEFAULT_APPROX_OFFSETS
    levels: int = 6
    base_size: int = 25
    m_cap: int = 600
    delta: float = DELTA_CRITICAL
    threshold_policy: str = "threshold-normalize"
    weights: tuple = DEFAULT_CONSISTENCY_WEIGHTS
    angles: tuple = DEFAULT_CONSISTENCY_ANGLES
    abs_tol: float | None = None
    rel_tol: float | None = None
    max_iter: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.code_kind not in ("circle", "e8"):
            raise ValueError("code kind must be 'circle' or 'e8'")
        if self.threshold_policy not in POLICIES:
            raise ValueError(f"threshold policy must be one of {POLICIES}")
        # Off-code sweeps default to a narrower kernel and more measurements
        # than the exact sweep: the sparsity plateau needs adjacent columns to
        # decohere so an off-grid atom keeps a single dominant coefficient.
        offgrid = self.kind in ("tau-sweep", "approx")
        if self.d is None:
            object.__setattr__(self, "d", 300 if offgrid else 30)
        if self.m is None:
            object.__setattr__(self, "m", 300 if offgrid else 120)
        if self.sparsity_rel_threshold is None and offgrid:
            object.__setattr__(self, "sparsity_rel_threshold", 0.1)
        if self.sparsity_rel_threshold is not None and not (
            0.0 < self.sparsity_rel_threshold < 1.0
        ):
            raise ValueError("sparsity_rel_threshold must lie in (0, 1)")
        for name in ("trials", "workers", "d", "m", "k", "levels", "base_size", "m_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.k_min < 0 or self.k_max < self.k_min:
            raise ValueError("need 0 <= k_min <= k_max")
        if self.k_max > 50:
            raise ValueError("sparsity sweeps cap at k = 50")
        if max(self.k, self.k_max) > self.code_size:
            raise ValueError("sparsity cannot exceed the code size")
        if not 0.0 <= self.failure_budget <= 1.0:
            raise ValueError("failure budget must lie in [0, 1]")
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be >= 0")
        grid = tuple(float(t) for t in self.tau_grid)
        if not grid:
            raise ValueError("tau grid must be nonempty")
        if any(t < 0.0 for t in grid) or list(grid) != sorted(grid):
            raise ValueError("tau grid must be nonnegative and ascending")
        object.__setattr__(self, "tau_grid", grid)
        object.__setattr__(self, "offsets", tuple(float(t) for t in self.offsets))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if len(self.weights) != len(self.angles):
            raise ValueError("consistency weights and angles must pair up")
        if any(w <= 0.0 for w in self.weights):
            raise ValueError("consistency weights must be positive")
        # Tight tolerances for consistency runs: Wasserstein error scales as
        # the square root of the weight error, so the solver must go deeper.
        deep = self.kind == "consistency"
        if self.abs_tol is None:
            object.__setattr__(self, "abs_tol", 1e-13 if deep else 1e-9)
        if self.rel_tol is None:
            object.__setattr__(self, "rel_tol", 1e-13 if deep else 1e-9)
        if self.max_iter is None:
            object.__setattr__(self, "max_iter", 500_000 if deep else 200_000)

    def solver_options(self) -> dict:
        return {
            "abs_tol": self.abs_tol,
            "rel_tol": self.rel_tol,
            "max_iter": self.max_iter,
        }


def _get(cp: configparser.ConfigParser, section: str, key: str, cast, default):
    if cp.has_option(section, key):
        raw = cp.get(section, key)
        if cast is tuple:
            return tuple(float(x) for x in raw.replace(",", " ").split())
        return cast(raw)
    return default


def load_config(path) -> ExperimentConfig:
    """Parse an experiment config from the key-value text format."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, "r", encoding="utf-8") as fh:
        cp.read_file(fh)
    if not cp.has_option("experiment", "kind"):
        raise ValueError("config must set kind in the [experiment] section")
    base = ExperimentConfig(kind=cp.get("experiment", "kind"))
    kw = dict(
        kind=base.kind,
        seed=_get(cp, "experiment", "seed", int, base.seed),
        trials=_get(cp, "experiment", "trials", int, base.trials),
        workers=_get(cp, "experiment", "workers", int, base.workers),
        failure_budget=_get(cp, "experiment", "failure_budget", float, base.failure_budget),
        code_kind=_get(cp, "code", "kind", str, base.code_kind),
        code_size=_get(cp, "code", "size", int, base.code_size),
        code_offset=_get(cp, "code", "offset", float, base.code_offset),
        d=_get(cp, "model", "degree", int, base.d),
        m=_get(cp, "model", "measurements", int, base.m),
        k=_get(cp, "measure", "k", int, base.k),
        k_min=_get(cp, "measure", "k_min", int, base.k_min),
        k_max=_get(cp, "measure", "k_max", int, base.k_max),
        atom_offset=_get(cp, "measure", "atom_offset", float, base.atom_offset),
        weights=_get(cp, "measure", "weights", tuple, base.weights),
        angles=_get(cp, "measure", "angles", tuple, base.angles),
        tau_grid=_get(cp, "tau", "grid", tuple, base.tau_grid),
        epsilon=_get(cp, "tau", "epsilon", float, base.epsilon),
        sparsity_rel_threshold=_get(
            cp, "tau", "sparsity_rel_threshold", float, base.sparsity_rel_threshold
        ),
        offsets=_get(cp, "approx", "offsets", tuple, base.offsets),
        levels=_get(cp, "consistency", "levels", int, base.levels),
        base_size=_get(cp, "consistency", "base_size", int, base.base_size),
        m_cap=_get(cp, "consistency", "m_cap", int, base.m_cap),
        delta=_get(cp, "consistency", "delta", float, base.delta),
        threshold_policy=_get(
            cp, "consistency", "threshold_policy", str, base.threshold_policy
        ),
    )
    if cp.has_option("solver", "abs_tol"):
        kw["abs_tol"] = cp.getfloat("solver", "abs_tol")
    if cp.has_option("solver", "rel_tol"):
        kw["rel_tol"] = cp.getfloat("solver", "rel_tol")
    if cp.has_option("solver", "max_iter"):
        kw["max_iter"] = cp.getint("solver", "max_iter")
    return ExperimentConfig(**kw)


def make_code(config: ExperimentConfig) -> SphericalCode:
    if config.code_kind == "e8":
        if config.code_size not in (240,):
            raise ValueError("the shell code has exactly 240 points")
        return make_e8_code()
    return make_circle_code(config.code_size, offset=config.code_offset)


@dataclass
class TrialRecord:
    """One experiment cell outcome; everything but wall_time lands in CSV."""

    kind: str
    cell: float
    trial: int
    seed_index: int
    status: str
    iterations: int
    residual_norm: float
    l1_value: float
    tau: float
    error: float
    k_tau: int
    truth_support: tuple
    truth_weights: tuple
    solution_support: tuple
    solution_values: tuple
    wall_time: float = 0.0

    def csv_row(self) -> list:
        def fmt(x):
            return format(float(x), ".17g")

        cell = str(self.cell) if isinstance(self.cell, int) else fmt(self.cell)
        return [
            self.kind,
            cell,
            str(self.trial),
            str(self.seed_index),
            self.status,
            str(self.iterations),
            fmt(self.residual_norm),
            fmt(self.l1_value),
            fmt(self.tau),
            fmt(self.error),
            str(self.k_tau),
            json.dumps(
                {"support": list(self.truth_support), "weights": list(self.truth_weights)},
                separators=(",", ":"),
            ),
            json.dumps(
                {"support": list(self.solution_support), "values": list(self.solution_values)},
                separators=(",", ":"),
            ),
        ]


def _solution_sparse(c: np.ndarray, floor: float = 1e-12):
    idx = np.flatnonzero(np.abs(c) > floor)
    return tuple(int(i) for i in idx), tuple(float(c[i]) for i in idx)


def numerical_sparsity(c, threshold: float) -> int:
    """#{i : |c_i| > threshold}."""
    if not threshold > 0.0:
        raise ValueError("threshold must be > 0")
    return int(np.count_nonzero(np.abs(np.asarray(c, dtype=float)) > threshold))


def default_sparsity_threshold(c) -> float:
    """Relative threshold 1e-4 * ||c||_inf (scale-free coefficient cutoff)."""
    return 1e-4 * float(np.max(np.abs(np.asarray(c, dtype=float)), initial=0.0))


def threshold_and_normalize(
    code: SphericalCode, c, t: float, policy: str = "threshold-normalize"
) -> DiscreteMeasure:
    """Turn a coefficient vector into a measure on the code.

    threshold-normalize: keep c_i > t, rescale kept weights to total mass 1.
    clamp: keep the positive part as-is (no threshold, no normalization).
    """
    c = np.asarray(c, dtype=float).ravel()
    if c.shape[0] != code.size:
        raise ValueError("coefficient length must match the code size")
    if policy == "threshold-normalize":
        if not t > 0.0:
            raise ValueError("threshold t must be > 0")
        mask = c > t
        if not mask.any():
            raise ValueError("empty measure: no coefficient exceeds the threshold")
        kept = c[mask]
        return DiscreteMeasure(code.points[mask], kept / kept.sum())
    if policy == "clamp":
        w = np.maximum(c, 0.0)
        mask = w > 0.0
        if not mask.any():
            raise ValueError("empty measure: no positive coefficient")
        return DiscreteMeasure(code.points[mask], w[mask])
    raise ValueError(f"unknown threshold policy {policy!r}")


def _offset_atoms(
    code: SphericalCode, indices: np.ndarray, theta: float, rng: np.random.Generator
) -> np.ndarray:
    """Move the chosen code points by angle theta; below half the code's
    angular spacing the source point stays the nearest one."""
    pts = code.points[indices]
    if theta == 0.0:
        return pts.copy()
    if code.dimension == 2:
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        return np.column_stack(
            [pts[:, 0] * cos_t - pts[:, 1] * sin_t, pts[:, 0] * sin_t + pts[:, 1] * cos_t]
        )
    out = np.empty_like(pts)
    for row, q in enumerate(pts):
        while True:
            v = rng.standard_normal(q.shape[0])
            u = v - (v @ q) * q
            norm = np.linalg.norm(u)
            if norm > 1e-12:
                break
        out[row] = q * math.cos(theta) + (u / norm) * math.sin(theta)
    return out


def _map_trials(fn, cells, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, cells))
    return [fn(cell) for cell in cells]


def run_exact_recovery(config: ExperimentConfig) -> list:
    """Sparsity sweep with on-code ground truth and equality-constrained
    recovery; one record per (k, trial)."""
    code = make_code(config)
    ks = list(range(config.k_min, config.k_max + 1))
    cells = [(k, t) for k in ks for t in range(config.trials)]
    children = np.random.SeedSequence(config.seed).spawn(2 * len(cells))
    opts = config.solver_options()

    def one(args):
        index, (k, trial) = args
        start = time.perf_counter()
        rng = np.random.default_rng(children[2 * index])
        support = np.sort(rng.choice(code.size, size=k, replace=False)) if k else np.empty(0, int)
        weights = rng.uniform(0.5, 1.5, size=k)
        mu = DiscreteMeasure(code.points[support], weights)
        ensemble = build_ensemble(code, config.d, config.m, children[2 * index + 1])
        b = moments_of(ensemble, mu)
        c_true = np.zeros(code.size)
        c_true[support] = weights
        try:
            sol = solve_bp(ensemble.phi, b.values, **opts)
            status, its = sol.status, sol.iterations
            c_star, res, l1 = sol.c_star, sol.residual_norm, sol.l1_value
        except Exception as exc:  # recorded in-row, not fatal
            status, its = f"error:{type(exc).__name__}", 0
            c_star, res, l1 = np.zeros(code.size), float(np.linalg.norm(b.values)), 0.0
        thresh = default_sparsity_threshold(c_star)
        k_tau = numerical_sparsity(c_star, thresh) if thresh > 0.0 else 0
        sol_support, sol_values = _solution_sparse(c_star)
        return TrialRecord(
            kind="exact",
            cell=int(k),
            trial=trial,
            seed_index=index,
            status=status,
            iterations=its,
            residual_norm=res,
            l1_value=l1,
            tau=0.0,
            error=float(np.linalg.norm(c_true - c_star)),
            k_tau=k_tau,
            truth_support=tuple(int(i) for i in support),
            truth_weights=tuple(float(w) for w in weights),
            solution_support=sol_support,
            solution_values=sol_values,
            wall_time=time.perf_counter() - start,
        )

    return _map_trials(one, list(enumerate(cells)), config.workers)


def k_of_tau(M, b, grid, rel_threshold=None, **solver_options):
    """Solve the recovery program at each tau and count surviving
    coefficients; returns (counts, solutions).

    rel_threshold overrides the default coefficient cutoff with
    rel_threshold * ||c||_inf; plateau detection needs a cutoff above the
    straddle mass an off-grid atom sheds onto its second-nearest code point.
    """
    counts, solutions = [], []
    for tau in grid:
        sol = solve_bp(M, b, **solver_options) if tau == 0.0 else solve_bpdn(
            M, b, tau, **solver_options
        )
        if rel_threshold is not None:
            thresh = rel_threshold * float(np.max(np.abs(sol.c_star), initial=0.0))
        else:
            thresh = default_sparsity_threshold(sol.c_star)
        counts.append(numerical_sparsity(sol.c_star, thresh) if thresh > 0.0 else 0)
        solutions.append(sol)
    return counts, solutions


@dataclass(frozen=True)
class TauSelection:
    """Plateau-detection outcome over one tau grid."""

    k_star: int
    tau: float
    plateau_length: int
    coverage: float
    warned: bool


def select_tau(grid, counts) -> TauSelection:
    """Stabilized sparsity = value of the longest constant run of k(tau)
    reaching into the upper half of the grid; the chosen tau is the smallest
    grid point attaining it.  Runs shorter than 3 fall back to the modal
    count, flagged by `warned`."""
    grid = list(grid)
    counts = list(counts)
    if len(grid) != len(counts) or not grid:
        raise ValueError("grid and counts must be equal-length and nonempty")
    runs = []  # (length, start, value)
    start = 0
    for i in range(1, len(counts) + 1):
        if i == len(counts) or counts[i] != counts[start]:
            runs.append((i - start, start, counts[start]))
            start = i
    half = len(grid) // 2
    qualifying = [r for r in runs if r[1] + r[0] - 1 >= half]
    best = max(qualifying, key=lambda r: (r[0], r[1])) if qualifying else max(
        runs, key=lambda r: (r[0], r[1])
    )
    warned = best[0] < 3
    if warned:
        values, freq = np.unique(counts, return_counts=True)
        k_star = int(values[np.argmax(freq)])
        run_len = max((r[0] for r in runs if r[2] == k_star), default=0)
    else:
        k_star = int(best[2])
        run_len = best[0]
    tau = grid[counts.index(k_star)]
    coverage = counts.count(k_star) / len(counts)
    return TauSelection(
        k_star=k_star, tau=float(tau), plateau_length=run_len, coverage=coverage, warned=warned
    )


def _offcode_instance(config: ExperimentConfig, code: SphericalCode, theta, measure_seed, ens_seed):
    """Shared setup for tau-sweep and approx trials: k atoms offset by theta
    from random code points, with the on-code projection as ground truth."""
    rng = np.random.default_rng(measure_seed)
    support = np.sort(rng.choice(code.size, size=config.k, replace=False))
    weights = rng.uniform(0.5, 1.5, size=config.k)
    atoms = _offset_atoms(code, support, theta, rng)
    mu = DiscreteMeasure(atoms, weights)
    ensemble = build_ensemble(code, config.d, config.m, ens_seed)
    b = moments_of(ensemble, mu)
    c_proj = np.zeros(code.size)
    c_proj[support] = weights
    return support, weights, ensemble, b, c_proj


def tau_sweep(config: ExperimentConfig):
    """Per trial: one off-code instance solved across the tau grid.

    Returns (records, selections): one record per (trial, tau) cell and one
    TauSelection per trial."""
    code = make_code(config)
    theta = config.atom_offset
    cells = list(range(config.trials))
    children = np.random.SeedSequence(config.seed).spawn(2 * len(cells))
    opts = config.solver_options()

    def one(trial):
        start = time.perf_counter()
        support, weights, ensemble, b, c_proj = _offcode_instance(
            config, code, theta, children[2 * trial], children[2 * trial + 1]
        )
        counts, sols = k_of_tau(
            ensemble.phi, b.values, config.tau_grid, config.sparsity_rel_threshold, **opts
        )
        selection = select_tau(config.tau_grid, counts)
        wall = time.perf_counter() - start
        rows = []
        for tau, count, sol in zip(config.tau_grid, counts, sols):
            sol_support, sol_values = _solution_sparse(sol.c_star)
            rows.append(
                TrialRecord(
                    kind="tau-sweep",
                    cell=float(tau),
                    trial=trial,
                    seed_index=trial,
                    status=sol.status,
                    iterations=sol.iterations,
                    residual_norm=sol.residual_norm,
                    l1_value=sol.l1_value,
                    tau=float(tau),
                    error=float(np.linalg.norm(c_proj - sol.c_star)),
                    k_tau=count,
                    truth_support=tuple(int(i) for i in support),
                    truth_weights=tuple(float(w) for w in weights),
                    solution_support=sol_support,
                    solution_values=sol_values,
                    wall_time=wall / len(config.tau_grid),
                )
            )
        return rows, selection

    outcomes = _map_trials(one, cells, config.workers)
    records = [row for rows, _ in outcomes for row in rows]
    selections = [sel for _, sel in outcomes]
    return records, selections


def run_approx_recovery(config: ExperimentConfig) -> list:
    """Error-vs-offset curve: each trial sweeps tau, then reports the error
    of the solution at the plateau-selected tau."""
    code = make_code(config)
    cells = [(theta, t) for theta in config.offsets for t in range(config.trials)]
    children = np.random.SeedSequence(config.seed).spawn(2 * len(cells))
    opts = config.solver_options()

    def one(args):
        index, (theta, trial) = args
        start = time.perf_counter()
        support, weights, ensemble, b, c_proj = _offcode_instance(
            config, code, theta, children[2 * index], children[2 * index + 1]
        )
        counts, sols = k_of_tau(
            ensemble.phi, b.values, config.tau_grid, config.sparsity_rel_threshold, **opts
        )
        selection = select_tau(config.tau_grid, counts)
        pick = list(config.tau_grid).index(selection.tau)
        sol = sols[pick]
        sol_support, sol_values = _solution_sparse(sol.c_star)
        return TrialRecord(
            kind="approx",
            cell=float(theta),
            trial=trial,
            seed_index=index,
            status=sol.status if not selection.warned else f"{sol.status}(no-plateau)",
            iterations=sol.iterations,
            residual_norm=sol.residual_norm,
            l1_value=sol.l1_value,
            tau=selection.tau,
            error=float(np.linalg.norm(c_proj - sol.c_star)),
            k_tau=selection.k_star,
            truth_support=tuple(int(i) for i in support),
            truth_weights=tuple(float(w) for w in weights),
            solution_support=sol_support,
            solution_values=sol_values,
            wall_time=time.perf_counter() - start,
        )

    return _map_trials(one, list(enumerate(cells)), config.workers)


class SelectorInfeasible(RuntimeError):
    """Raised when no degree satisfies the per-level selection conditions."""

    def __init__(self, level: int, condition: str, details: dict):
        self.level = level
        self.condition = condition
        self.details = details
        super().__init__(
            f"level {level}: condition '{condition}' cannot be met ({details})"
        )


def _select_degree(k: int, alpha: float, theta: float, level: int) -> int:
    """Smallest d with (k-1)((1+alpha)/2)^d < sqrt(2)-1 whose approximation
    factor ((1+cos theta)/2)^d still exceeds 1 - 1/(level+1).

    The isometry condition pushes d up, the approximation condition caps it;
    the level index is shifted by one so the first level is uncapped."""
    beta = (1.0 + alpha) / 2.0
    if k <= 1 or (k - 1) < DELTA_CRITICAL:
        d = 0
    elif beta <= 0.0:
        d = 1
    else:
        d = max(0, math.ceil(math.log(DELTA_CRITICAL / (k - 1)) / math.log(beta)))
        while d > 0 and (k - 1) * beta ** (d - 1) < DELTA_CRITICAL:
            d -= 1
        while (k - 1) * beta**d >= DELTA_CRITICAL:
            d += 1
    if theta > 0.0:
        s = (1.0 + math.cos(theta)) / 2.0
        target = 1.0 - 1.0 / (level + 1)
        reached = s**d
        if reached < target:
            raise SelectorInfeasible(
                level,
                "approximation-rate",
                {"d": d, "reached": reached, "target": target, "theta": theta},
            )
    return d


def run_consistency(config: ExperimentConfig):
    """Nested-code consistency run; returns (records, table).

    Per level j: code of size base_size * 2^j, selector-chosen degree, sample
    count from the isometry bound capped by config, recovery at the inflated
    mean-squared-gap radius, thresholding at half the smallest true weight,
    and the Wasserstein distance to the truth."""
    if config.code_kind != "circle":
        raise ValueError("consistency runs use circle codes")
    angles = np.asarray(config.angles, dtype=float)
    g = np.asarray(config.weights, dtype=float)
    g = g / g.sum()
    k = g.shape[0]
    atoms = np.column_stack([np.cos(angles), np.sin(angles)])
    mu = DiscreteMeasure(atoms, g)
    t = 0.5 * float(g.min())
    children = np.random.SeedSequence(config.seed).spawn(config.levels)
    opts = config.solver_options()

    records, table = [], []
    for j in range(config.levels):
        start = time.perf_counter()
        N_j = config.base_size * 2**j
        code = make_circle_code(N_j, offset=config.code_offset)
        theta_j = theta_of(code, atoms)
        d_j = _select_degree(k, code.alpha, theta_j, j)
        m_j = min(int(math.ceil(theorem_b_sample_bound(N_j, k, config.delta))), config.m_cap)
        ensemble = build_joint_ensemble(code, atoms, d_j, m_j, children[j])
        b = moments_of(ensemble, mu)
        tau_j = (1.0 + config.epsilon) * math.sqrt(mse_bound(g, k, theta_j, d_j))

        if tau_j == 0.0:
            sol = solve_bp(ensemble.phi, b.values, **opts)
        else:
            sol = solve_bpdn(ensemble.phi, b.values, tau_j, **opts)

        mu_C = nearest_code_projection(code, mu)
        w_proj, _ = wasserstein(mu, mu_C)
        c_proj = np.zeros(N_j)
        for point, weight in zip(mu_C.points, mu_C.weights):
            match = np.flatnonzero((code.points == point).all(axis=1))
            c_proj[match[0]] += weight

        status = sol.status
        try:
            mu_star = threshold_and_normalize(code, sol.c_star, t, config.threshold_policy)
            w_level, _ = wasserstein(mu, mu_star)
            h_full = np.zeros(N_j)
            for point, weight in zip(mu_star.points, mu_star.weights):
                match = np.flatnonzero((code.points == point).all(axis=1))
                h_full[match[0]] += weight
            l1_bound = wasserstein_upper_bound_via_l1(c_proj, h_full)
        except ValueError:
            status = "empty-measure"
            w_level = math.nan
            l1_bound = math.nan

        sol_support, sol_values = _solution_sparse(sol.c_star)
        truth_support = tuple(int(i) for i in np.flatnonzero(c_proj > 0.0))
        records.append(
            TrialRecord(
                kind="consistency",
                cell=int(j),
                trial=0,
                seed_index=j,
                status=status,
                iterations=sol.iterations,
                residual_norm=sol.residual_norm,
                l1_value=sol.l1_value,
                tau=tau_j,
                error=float(np.linalg.norm(c_proj - sol.c_star)),
                k_tau=numerical_sparsity(sol.c_star, t) if t > 0 else 0,
                truth_support=truth_support,
                truth_weights=tuple(float(c_proj[i]) for i in truth_support),
                solution_support=sol_support,
                solution_values=sol_values,
                wall_time=time.perf_counter() - start,
            )
        )
        table.append(
            {
                "j": j,
                "N_j": N_j,
                "d_j": d_j,
                "m_j": m_j,
                "theta_j": theta_j,
                "tau_j": tau_j,
                "status": status,
                "wasserstein": w_level,
                "wasserstein_projection": w_proj,
                "l1_transport_bound": l1_bound,
            }
        )
    return records, table


@dataclass
class ExperimentResult:
    records: list
    summary: dict
    ok: bool
    records_path: Path | None = None
    summary_path: Path | None = None
    figure_path: Path | None = None


def write_records_csv(records, path):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow(record.csv_row())
    return path


def _summarize(config: ExperimentConfig, records, extra: dict) -> dict:
    by_cell: dict = {}
    for r in records:
        by_cell.setdefault(r.cell, []).append(r)
    cells = []
    for cell in sorted(by_cell):
        errs = np.array([r.error for r in by_cell[cell]])
        cells.append(
            {
                "cell": cell,
                "count": int(errs.size),
                "mean_error": float(errs.mean()),
                "median_error": float(np.median(errs)),
                "success_rate": float(np.mean(errs < SUCCESS_ERROR)),
            }
        )
    optimal = sum(1 for r in records if r.status == "optimal")
    summary = {
        "kind": config.kind,
        "config": asdict(config),
        "row_count": len(records),
        "optimal_rows": optimal,
        "cells": cells,
    }
    summary.update(extra)
    return summary


def run_experiment(config: ExperimentConfig, out_dir=None, figure: bool = False) -> ExperimentResult:
    """Run one experiment kind, optionally writing records.csv, summary.json,
    and figure.png under out_dir.  `ok` mirrors the CLI exit status: every
    row optimal, or the non-optimal fraction within the failure budget."""
    extra: dict = {}
    if config.kind == "exact":
        records = run_exact_recovery(config)
    elif config.kind == "tau-sweep":
        records, selections = tau_sweep(config)
        extra["selections"] = [asdict(s) for s in selections]
    elif config.kind == "approx":
        records = run_approx_recovery(config)
    else:
        records, table = run_consistency(config)
        extra["levels"] = table
    summary = _summarize(config, records, extra)
    bad = sum(1 for r in records if not r.status.startswith("optimal"))
    ok = bad == 0 or bad <= config.failure_budget * len(records)
    summary["ok"] = ok

    result = ExperimentResult(records=records, summary=summary, ok=ok)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.records_path = write_records_csv(records, out_dir / "records.csv")
        result.summary_path = out_dir / "summary.json"
        with open(result.summary_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if figure:
            from .plotting import plot_records

            result.figure_path = plot_records(
                result.records_path, out_dir / "figure.png", config.kind
            )
    return result
