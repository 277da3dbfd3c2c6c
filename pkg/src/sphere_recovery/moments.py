"""Measurement ensembles, moment vectors, and the mean-squared-error form.

The ensemble stacks m independent random polynomials, evaluated at the N code
points and scaled by 1/sqrt(m):  Phi[i, j] = P_i(q_j)/sqrt(m).  Moments of a
measure mu against the same scaled family give the data vector b; when mu is
supported on the code, b = Phi c with c the weight vector.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kss import (
    _kernel_power,
    coefficient_rows,
    kernel_matrix,
    monomial_matrix,
    sample_evaluations,
)
from .measures import DiscreteMeasure, check_unit_vectors
from .sphere_codes import SphericalCode

__all__ = [
    "MeasurementEnsemble",
    "MomentVector",
    "MseForm",
    "SingularSystemError",
    "build_ensemble",
    "build_joint_ensemble",
    "moments_of",
    "mse_form",
    "psi",
    "optimal_coeffs",
    "save_matrix_csv",
    "load_matrix_csv",
    "save_vector_csv",
    "load_vector_csv",
]

# Condition-number guard for the restricted kernel system.
COND_CAP = 1e12


class SingularSystemError(RuntimeError):
    """Raised when a restricted kernel matrix is numerically singular."""


@dataclass(frozen=True)
class MeasurementEnsemble:
    """m scaled random polynomials frozen at the code points.

    ``sampler`` records which route produced the rows: "coefficient" draws
    explicit coefficient vectors (available for evaluation anywhere), while
    "kernel" draws the evaluation vectors directly and therefore only knows
    the polynomials at the code points plus the ``extra_points`` it was built
    with.  Both routes are deterministic in the seed.
    """

    phi: np.ndarray
    code: SphericalCode
    d: int
    m: int
    seed: int
    sampler: str = "coefficient"
    coeff_rows: np.ndarray | None = None
    extra_points: np.ndarray | None = None
    extra_evals: np.ndarray | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.shape != (self.m, self.code.size):
            raise ValueError("phi must be (m, N)")
        if self.sampler not in ("coefficient", "kernel"):
            raise ValueError("sampler must be 'coefficient' or 'kernel'")
        object.__setattr__(self, "phi", phi)

    @property
    def ensemble_id(self) -> str:
        return f"{self.code.label}:d={self.d}:m={self.m}:seed={self.seed}:{self.sampler}"


def build_ensemble(code: SphericalCode, d: int, m: int, seed) -> MeasurementEnsemble:
    """Draw m polynomials in coefficient space and tabulate Phi = X/sqrt(m)."""
    if m < 1:
        raise ValueError("need m >= 1")
    rows = coefficient_rows(code.dimension, d, m, seed)
    mono = monomial_matrix(code.dimension, d, code.points)
    phi = (rows @ mono) / np.sqrt(m)
    return MeasurementEnsemble(
        phi, code, d, m, seed, sampler="coefficient", coeff_rows=rows
    )


def build_joint_ensemble(
    code: SphericalCode, extra_points, d: int, m: int, seed
) -> MeasurementEnsemble:
    """Evaluation-space ensemble that also knows P_i at the given extra points.

    Draws the joint vector (P(q_1..q_N), P(x_1..x_k)) exactly from the kernel
    covariance, so arbitrary degrees are usable; the price is that moments are
    only defined for measures supported on the code or the extra points.
    """
    if m < 1:
        raise ValueError("need m >= 1")
    extra = check_unit_vectors(extra_points)
    if extra.shape[1] != code.dimension:
        raise ValueError("extra points and code live in different dimensions")
    joint = np.vstack([code.points, extra])
    X = sample_evaluations(joint, d, m, seed)
    phi = X[:, : code.size] / np.sqrt(m)
    return MeasurementEnsemble(
        phi,
        code,
        d,
        m,
        seed,
        sampler="kernel",
        extra_points=extra,
        extra_evals=X[:, code.size:],
    )


def _measure_fingerprint(mu: DiscreteMeasure) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mu.points).tobytes())
    h.update(np.ascontiguousarray(mu.weights).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class MomentVector:
    """Moment data b with provenance, so vectors from different ensembles or
    measures cannot be mixed up silently."""

    values: np.ndarray
    ensemble_id: str
    measure_fingerprint: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("values must be a vector")
        object.__setattr__(self, "values", v)

    def values_for(self, ensemble: MeasurementEnsemble) -> np.ndarray:
        if self.ensemble_id != ensemble.ensemble_id:
            raise ValueError(
                f"moment vector belongs to {self.ensemble_id!r}, "
                f"not {ensemble.ensemble_id!r}"
            )
        return self.values

    def __sub__(self, other: "MomentVector") -> np.ndarray:
        if self.ensemble_id != other.ensemble_id:
            raise ValueError("cannot subtract moments from different ensembles")
        return self.values - other.values


def _match_rows(targets: np.ndarray, table: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Index into table for each target row, or -1 when absent.

    tol = 0 demands bitwise equality, which is what on-code measures built
    from the code's own points satisfy.
    """
    idx = np.full(targets.shape[0], -1, dtype=int)
    for i, t in enumerate(targets):
        if tol == 0.0:
            hits = np.flatnonzero((table == t).all(axis=1))
        else:
            hits = np.flatnonzero(np.abs(table - t).max(axis=1) <= tol)
        if hits.size:
            idx[i] = hits[0]
    return idx


def moments_of(source, mu: DiscreteMeasure) -> MomentVector:
    """Moments of mu against an ensemble (scaled by 1/sqrt(m)) or a raw
    polynomial list (unscaled):  b_j = sum_i w_i f_j(x_i)."""
    if isinstance(source, MeasurementEnsemble):
        return _ensemble_moments(source, mu)
    polys = list(source)
    if not polys:
        raise ValueError("empty polynomial list")
    if mu.size == 0:
        values = np.zeros(len(polys))
    else:
        p0 = polys[0]
        mono = monomial_matrix(p0.n, p0.d, mu.points)
        coeffs = np.vstack([p.coeffs for p in polys])
        values = (coeffs @ mono) @ mu.weights
    return MomentVector(values, f"polynomials:m={len(polys)}", _measure_fingerprint(mu))


def _ensemble_moments(ens: MeasurementEnsemble, mu: DiscreteMeasure) -> MomentVector:
    if mu.size == 0:
        return MomentVector(
            np.zeros(ens.m), ens.ensemble_id, _measure_fingerprint(mu)
        )
    if mu.dimension != ens.code.dimension:
        raise ValueError("measure and code live in different dimensions")
    scale = 1.0 / np.sqrt(ens.m)
    code_idx = _match_rows(mu.points, ens.code.points)
    if (code_idx >= 0).all():
        values = ens.phi[:, code_idx] @ mu.weights
        return MomentVector(values, ens.ensemble_id, _measure_fingerprint(mu))
    if ens.sampler == "coefficient":
        mono = monomial_matrix(ens.code.dimension, ens.d, mu.points)
        values = (ens.coeff_rows @ mono) @ mu.weights * scale
        return MomentVector(values, ens.ensemble_id, _measure_fingerprint(mu))
    # Kernel-mode ensembles only know the polynomials at code + extra points.
    values = np.zeros(ens.m)
    for i, (atom, w) in enumerate(zip(mu.points, mu.weights)):
        if code_idx[i] >= 0:
            values += w * ens.phi[:, code_idx[i]]
            continue
        if ens.extra_points is None:
            raise ValueError("kernel-mode ensemble has no extra points")
        hit = _match_rows(atom[None, :], ens.extra_points)[0]
        if hit < 0:
            raise ValueError(
                f"atom {i} is neither a code point nor a point this kernel-mode "
                "ensemble was built with"
            )
        values += w * ens.extra_evals[:, hit] * scale
    return MomentVector(values, ens.ensemble_id, _measure_fingerprint(mu))


@dataclass(frozen=True)
class MseForm:
    """Quadratic form Psi(r, c) = c'Vc - 2 c'Ar + r'Dr.

    V is the kernel matrix of the code (N x N), A couples code points to the
    k target points (N x k), D is the kernel matrix of the targets (k x k);
    all three raise the base to the same power d.  Psi(r, c) equals the
    expected squared moment gap E || b_target - b_code ||^2 when c places
    weights on the code and r on the targets.
    """

    V: np.ndarray
    A: np.ndarray
    D: np.ndarray
    d: int

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        A = np.asarray(self.A, dtype=float)
        D = np.asarray(self.D, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ValueError("V must be square")
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError("D must be square")
        if A.shape != (V.shape[0], D.shape[0]):
            raise ValueError("A must be (N, k)")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", D)

    @property
    def N(self) -> int:
        return self.V.shape[0]

    @property
    def k(self) -> int:
        return self.D.shape[0]


def mse_form(code: SphericalCode, target_points, d: int) -> MseForm:
    """Assemble V, A, D for the code against the given target points."""
    targets = check_unit_vectors(target_points)
    if targets.shape[1] != code.dimension:
        raise ValueError("target points and code live in different dimensions")
    V = kernel_matrix(code, d).entries
    D = kernel_matrix(targets, d).entries
    base = (1.0 + np.clip(code.points @ targets.T, -1.0, 1.0)) / 2.0
    A = _kernel_power(base, d)
    return MseForm(V, A, D, d)


def psi(form: MseForm, r, c) -> float:
    """Evaluate the expected squared moment gap for weights (r, c)."""
    rv = np.asarray(r, dtype=float)
    cv = np.asarray(c, dtype=float)
    if rv.shape != (form.k,):
        raise ValueError(f"r must have length {form.k}")
    if cv.shape != (form.N,):
        raise ValueError(f"c must have length {form.N}")
    return float(cv @ form.V @ cv - 2.0 * cv @ (form.A @ rv) + rv @ form.D @ rv)


def optimal_coeffs(form: MseForm, subset, r) -> np.ndarray:
    """Minimizer of Psi(r, .) over coefficients supported on the subset.

    Solves V_S c = A_S r by a symmetric positive definite factorization; a
    condition number beyond COND_CAP raises SingularSystemError naming the
    subset.
    """
    idx = np.asarray(list(subset), dtype=int)
    if idx.size == 0:
        raise ValueError("subset is empty")
    if np.unique(idx).size != idx.size:
        raise ValueError("subset has repeated indices")
    if idx.min() < 0 or idx.max() >= form.N:
        raise ValueError("subset index out of range")
    rv = np.asarray(r, dtype=float)
    if rv.shape != (form.k,):
        raise ValueError(f"r must have length {form.k}")
    V_S = form.V[np.ix_(idx, idx)]
    rhs = form.A[idx, :] @ rv
    lam = np.linalg.eigvalsh(V_S)
    if lam[0] <= 0.0 or lam[-1] / lam[0] > COND_CAP:
        raise SingularSystemError(
            f"restricted kernel matrix for subset {idx.tolist()} is singular "
            f"(eigenvalue range [{lam[0]:.3e}, {lam[-1]:.3e}])"
        )
    try:
        cho = scipy.linalg.cho_factor(V_S)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded above
        raise SingularSystemError(
            f"factorization failed for subset {idx.tolist()}"
        ) from exc
    return scipy.linalg.cho_solve(cho, rhs)


def save_matrix_csv(path, M) -> None:
    """Row-major CSV with 17 significant digits."""
    arr = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", encoding="ascii") as fh:
        for row in arr:
            fh.write(",".join(format(x, ".17g") for x in row) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def save_vector_csv(path, v) -> None:
    arr = np.asarray(v, dtype=float).ravel()
    with open(path, "w", encoding="ascii") as fh:
        for x in arr:
            fh.write(format(x, ".17g") + "\n")


def load_vector_csv(path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",")
    return np.atleast_1d(arr).ravel()
