"""Analytic bounds and exact constants for the recovery pipeline.

Restricted-isometry constants by enumeration, eigenvalue containment bounds
for kernel submatrices, the chi-squared concentration rate c0 and its tail
bound, the sample-count and failure-probability bounds for the measurement
ensemble, the mean-squared moment-gap bound and its minimizer tau*, and the
l1 stability constant B1.  Everything here is pure arithmetic; no sampling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .kss import _kernel_power
from .moments import MseForm, SingularSystemError, optimal_coeffs, psi

__all__ = [
    "RipReport",
    "BoundReport",
    "TauStarReport",
    "rip_constant",
    "gershgorin_bounds",
    "c0",
    "concentration_bound",
    "theorem_b_probability",
    "theorem_b_sample_bound",
    "theorem_b_min_degree",
    "mse_bound",
    "tau_star",
    "candes_error_constant",
]

ENUMERATION_CAP = 10**6
SAMPLE_FALLBACK = 10**4

# Domain edge of the l1 stability guarantee.
DELTA_CRITICAL = math.sqrt(2.0) - 1.0


@dataclass(frozen=True)
class RipReport:
    """Isometry constant of one sparsity level, with the witness subset."""

    s: int
    delta_s: float
    worst_subset: tuple
    method: str  # "exact-enumeration" or "sampled-lower-bound"
    subsets_checked: int

    def __post_init__(self):
        if self.method not in ("exact-enumeration", "sampled-lower-bound"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.delta_s < 0.0:
            raise ValueError("delta_s must be >= 0")


@dataclass(frozen=True)
class BoundReport:
    """A named analytic bound with its inputs echoed for provenance."""

    name: str
    inputs: dict
    value: float
    log_value: float | None = None
    note: str | None = None

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("bound value must be finite")

    def to_dict(self) -> dict:
        out = {"name": self.name, "inputs": dict(self.inputs), "value": self.value}
        if self.log_value is not None:
            out["log_value"] = self.log_value
        if self.note is not None:
            out["note"] = self.note
        return out


def _subset_deviation(gram: np.ndarray) -> float:
    eig = np.linalg.eigvalsh(gram)
    return max(float(eig[-1]) - 1.0, 1.0 - float(eig[0]))


def rip_constant(
    A,
    s: int,
    *,
    enumeration_cap: int = ENUMERATION_CAP,
    sample_count: int = SAMPLE_FALLBACK,
    seed: int = 0,
) -> RipReport:
    """Isometry constant delta_s of A: the worst eigenvalue deviation of
    A_S' A_S from the identity over supports of size s.

    Exact when C(N, s) fits under the enumeration cap; otherwise a sampled
    lower bound over `sample_count` random supports, flagged in `method`.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("matrix must be 2-D")
    N = A.shape[1]
    if not 1 <= s <= N:
        raise ValueError(f"sparsity level s={s} must be in [1, {N}]")

    total = math.comb(N, s)
    worst = -np.inf
    worst_subset: tuple = ()
    if total <= enumeration_cap:
        method = "exact-enumeration"
        checked = total
        for subset in itertools.combinations(range(N), s):
            sub = A[:, subset]
            dev = _subset_deviation(sub.T @ sub)
            if dev > worst:
                worst, worst_subset = dev, subset
    else:
        method = "sampled-lower-bound"
        checked = sample_count
        rng = np.random.default_rng(seed)
        for _ in range(sample_count):
            subset = tuple(sorted(rng.choice(N, size=s, replace=False).tolist()))
            sub = A[:, subset]
            dev = _subset_deviation(sub.T @ sub)
            if dev > worst:
                worst, worst_subset = dev, subset
    return RipReport(
        s=s,
        delta_s=max(0.0, worst),
        worst_subset=worst_subset,
        method=method,
        subsets_checked=checked,
    )


def _points_of(code) -> np.ndarray:
    pts = getattr(code, "points", code)
    return np.asarray(pts, dtype=float)


def gershgorin_bounds(code, subset, d: int, alpha_override: float | None = None):
    """Eigenvalue interval 1 +- (k-1)((1+alpha)/2)^d for the kernel matrix
    restricted to `subset`, alpha being the subset's max pairwise inner
    product (or the override)."""
    points = _points_of(code)
    subset = np.asarray(subset, dtype=int)
    if subset.ndim != 1 or subset.size == 0:
        raise ValueError("subset must be a nonempty 1-D index set")
    if len(set(subset.tolist())) != subset.size:
        raise ValueError("subset indices must be distinct")
    if subset.min() < 0 or subset.max() >= points.shape[0]:
        raise ValueError("subset index out of range")
    if d < 0:
        raise ValueError("degree must be >= 0")
    k = subset.size
    if k == 1:
        return (1.0, 1.0)
    if alpha_override is not None:
        alpha = float(alpha_override)
    else:
        sub = points[subset]
        gram = sub @ sub.T
        alpha = float(np.max(gram[~np.eye(k, dtype=bool)]))
    if alpha >= 1.0:
        raise ValueError("max pairwise inner product must be < 1 (distinct points)")
    base = max(0.0, (1.0 + alpha) / 2.0)
    radius = (k - 1) * float(_kernel_power(np.asarray(base), d))
    return (1.0 - radius, 1.0 + radius)


def c0(eta: float) -> float:
    """Concentration rate min(log(1/(1+eta))/2 + eta/2, log(1/(1-eta))/2 - eta/2).

    Governs the chi-squared tail 2 exp(-m c0(eta)); positive on 0 < eta < 1.
    """
    eta = float(eta)
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    upper = 0.5 * math.log(1.0 / (1.0 + eta)) + eta / 2.0
    lower = 0.5 * math.log(1.0 / (1.0 - eta)) - eta / 2.0
    return min(upper, lower)


def concentration_bound(m: int, eta: float) -> float:
    """Tail bound 2 exp(-m c0(eta)) on relative deviation of ||Phi c||^2."""
    if m < 0:
        raise ValueError("m must be >= 0")
    return 2.0 * math.exp(-m * c0(eta))


def _validate_delta(delta: float):
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")


def theorem_b_probability(N: int, k: int, m: int, delta: float) -> BoundReport:
    """Failure-probability bound C(N,2k) (30/delta)^{2k} 2 exp(-m c0(delta/6)).

    Evaluated in log space; the reported value is clamped to [0, 1] with the
    raw natural log attached.
    """
    _validate_delta(delta)
    if k < 1 or 2 * k > N:
        raise ValueError("need 1 <= 2k <= N")
    if m < 0:
        raise ValueError("m must be >= 0")
    log_raw = (
        math.log(math.comb(N, 2 * k))
        + 2 * k * math.log(30.0 / delta)
        + math.log(2.0)
        - m * c0(delta / 6.0)
    )
    value = min(1.0, math.exp(min(log_raw, 0.0)))
    return BoundReport(
        name="isometry-failure-probability",
        inputs={"N": N, "k": k, "m": m, "delta": delta},
        value=value,
        log_value=log_raw,
    )


def theorem_b_sample_bound(N: int, k: int, delta: float) -> float:
    """Sample count (2k log(30eN/(2k delta)) + log 2) / c0(delta/6) above
    which the isometry constant delta_2k <= delta is achievable."""
    _validate_delta(delta)
    if k < 1 or 2 * k > N:
        raise ValueError("need 1 <= 2k <= N")
    numerator = 2 * k * math.log(30.0 * math.e * N / (2 * k * delta)) + math.log(2.0)
    return numerator / c0(delta / 6.0)


def theorem_b_min_degree(k: int, alpha: float, delta: float, *, max_degree: int = 10**6) -> int:
    """Smallest degree making the eigenvalue-transfer step of the isometry
    bound valid: with t = (2k-1)((1+alpha)/2)^d, both

        (1 + delta/6)(1 + t) <= 1 + delta/5
        (1 - delta/6)(1 - t) >= 1 - delta/5

    must hold, so the kernel submatrix spectrum absorbs into the
    concentration radius."""
    _validate_delta(delta)
    if k < 1:
        raise ValueError("k must be >= 1")
    if not -1.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [-1, 1)")
    beta = (1.0 + alpha) / 2.0

    def satisfied(d: int) -> bool:
        t = (2 * k - 1) * float(_kernel_power(np.asarray(beta), d))
        return (1.0 + delta / 6.0) * (1.0 + t) <= 1.0 + delta / 5.0 and (
            1.0 - delta / 6.0
        ) * (1.0 - t) >= 1.0 - delta / 5.0

    # Analytic seed from the binding first inequality, then a verbatim walk.
    target = (delta / 30.0) / (1.0 + delta / 6.0)
    if beta <= 0.0:
        d = 0 if satisfied(0) else 1
        if not satisfied(d):
            raise RuntimeError("no feasible degree")
        return d
    guess = math.log(target / (2 * k - 1)) / math.log(beta) if 2 * k - 1 > target else 0.0
    d = max(0, math.ceil(guess))
    while d > 0 and satisfied(d - 1):
        d -= 1
    while not satisfied(d):
        d += 1
        if d > max_degree:
            raise RuntimeError(f"no feasible degree below {max_degree}")
    return d


def mse_bound(g, k: int, theta: float, d: int) -> float:
    """Expected squared moment gap bound ||g||^2 2k (1 - ((1+cos theta)/2)^d)
    between a k-atom measure and its code projection at offset angle theta."""
    g = np.asarray(g, dtype=float).ravel()
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= theta <= math.pi:
        raise ValueError("theta must lie in [0, pi]")
    if d < 0:
        raise ValueError("degree must be >= 0")
    base = (1.0 + math.cos(theta)) / 2.0
    gap = 1.0 - float(_kernel_power(np.asarray(max(0.0, base)), d))
    return float(g @ g) * 2.0 * k * gap


@dataclass(frozen=True)
class TauStarReport:
    """Minimal root-mean-squared moment error over size-k supports."""

    value: float
    subset: tuple
    coeffs: np.ndarray = field(repr=False)


def tau_star(
    form: MseForm, r, k: int, *, enumeration_cap: int = ENUMERATION_CAP
) -> TauStarReport:
    """tau* = sqrt of the minimal expected squared moment error Psi over all
    supports of size k, by exhaustive enumeration.  Singular supports are
    skipped; all-singular is an error."""
    r = np.asarray(r, dtype=float).ravel()
    N = form.N
    if not 1 <= k <= N:
        raise ValueError(f"k={k} must be in [1, {N}]")
    if math.comb(N, k) > enumeration_cap:
        raise ValueError(f"C({N},{k}) exceeds the enumeration cap {enumeration_cap}")
    best = np.inf
    best_subset: tuple | None = None
    best_coeffs = None
    for subset in itertools.combinations(range(N), k):
        try:
            coeffs = optimal_coeffs(form, subset, r)
        except SingularSystemError:
            continue
        full = np.zeros(N)
        full[list(subset)] = coeffs
        value = max(0.0, psi(form, r, full))
        if value < best:
            best, best_subset, best_coeffs = value, subset, full
    if best_subset is None:
        raise RuntimeError("every size-k support produced a singular system")
    return TauStarReport(value=math.sqrt(best), subset=best_subset, coeffs=best_coeffs)


def candes_error_constant(delta: float) -> float:
    """Stability constant B1(delta) = 4 sqrt(1+delta) / (1 - (1+sqrt2) delta),
    valid on 0 <= delta < sqrt2 - 1; the recovery error of the ball-constrained
    program is at most B1 tau."""
    if not 0.0 <= delta < DELTA_CRITICAL:
        raise ValueError(f"delta must lie in [0, {DELTA_CRITICAL:.6f})")
    return 4.0 * math.sqrt(1.0 + delta) / (1.0 - (1.0 + math.sqrt(2.0)) * delta)
