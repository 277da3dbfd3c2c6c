"""Random polynomial ensemble on R^n with sphere-adapted covariance.

A degree-d polynomial P(x) = sum_{|alpha| <= d} A_alpha x^alpha is drawn with
independent centered Gaussian coefficients of variance

    Var(A_alpha) = d! / ((d - |alpha|)! * prod_i alpha_i!) / 2^d,

which makes E[P(x) P(y)] = ((1 + <x, y>)/2)^d for unit vectors x, y, so in
particular E[P(x)^2] = 1 on the sphere and the law is rotation invariant.

Two samplers are provided: the coefficient-space sampler above, and an exact
evaluation-space sampler that draws the vector (P(x_1), ..., P(x_P)) directly
as a multivariate normal with the kernel covariance.  The latter scales with
the number of evaluation points only, which is what makes very large d usable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .measures import check_unit_vectors
from .sphere_codes import SphericalCode

__all__ = [
    "multiindex_count",
    "enumerate_multiindices",
    "kss_variance",
    "KssPolynomial",
    "sample_kss",
    "coefficient_rows",
    "sample_coefficient_block",
    "evaluate",
    "monomial_matrix",
    "kernel_value",
    "kernel_matrix",
    "KernelMatrix",
    "sample_evaluations",
    "save_polynomial",
    "load_polynomial",
]

# Coefficient-space work beyond this many monomials is refused; use the
# evaluation-space sampler instead.
MAX_MONOMIALS = 500_000


def multiindex_count(n: int, d: int) -> int:
    """Number of monomials of degree <= d in n variables: C(n + d, n)."""
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")
    return math.comb(n + d, n)


def enumerate_multiindices(n: int, d: int) -> np.ndarray:
    """All exponent vectors alpha with |alpha| <= d, ascending lexicographic.

    Returns an (L, n) integer array, L = C(n + d, n); row order is the fixed
    coefficient order used everywhere else in this package.
    """
    L = multiindex_count(n, d)
    if L > MAX_MONOMIALS:
        raise ValueError(
            f"{L} monomials exceeds the coefficient-space cap {MAX_MONOMIALS}; "
            "use sample_evaluations for large degrees"
        )
    out = np.zeros((L, n), dtype=np.int64)
    row = 0

    def rec(j: int, budget: int) -> None:
        nonlocal row
        if j == n - 1:
            for k in range(budget + 1):
                out[row, j] = k
                row += 1
            return
        for k in range(budget + 1):
            start = row
            rec(j + 1, budget - k)
            out[start:row, j] = k

    rec(0, d)
    assert row == L
    return out


def kss_variance(alpha, d: int) -> float:
    """Variance d!/((d-|alpha|)! prod alpha_i!)/2^d of the coefficient at alpha.

    Computed through log-gamma so large d stays finite.
    """
    a = np.asarray(alpha, dtype=np.int64)
    if a.ndim != 1 or a.size < 1:
        raise ValueError("alpha must be a nonempty exponent vector")
    if d < 0 or np.any(a < 0):
        raise ValueError("need d >= 0 and alpha >= 0")
    total = int(a.sum())
    if total > d:
        raise ValueError(f"|alpha| = {total} exceeds the degree {d}")
    logv = (
        gammaln(d + 1)
        - gammaln(d - total + 1)
        - gammaln(a + 1).sum()
        - d * math.log(2.0)
    )
    return float(np.exp(logv))


def _coefficient_sigmas(exponents: np.ndarray, d: int) -> np.ndarray:
    """Standard deviations for every row of an exponent array at once."""
    totals = exponents.sum(axis=1)
    logv = (
        gammaln(d + 1)
        - gammaln(d - totals + 1)
        - gammaln(exponents + 1).sum(axis=1)
        - d * math.log(2.0)
    )
    return np.exp(0.5 * logv)


@dataclass(frozen=True)
class KssPolynomial:
    """Degree-d polynomial in n variables, coefficients in lexicographic order."""

    n: int
    d: int
    exponents: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        L = multiindex_count(self.n, self.d)
        exps = np.asarray(self.exponents, dtype=np.int64)
        cs = np.asarray(self.coeffs, dtype=float)
        if exps.shape != (L, self.n):
            raise ValueError(f"expected {L} exponent rows of length {self.n}")
        if cs.shape != (L,):
            raise ValueError(f"expected {L} coefficients")
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "coeffs", cs)

    def coefficient(self, alpha) -> float:
        a = np.asarray(alpha, dtype=np.int64)
        hits = np.flatnonzero((self.exponents == a).all(axis=1))
        if hits.size != 1:
            raise ValueError(f"no coefficient for exponent {tuple(a)}")
        return float(self.coeffs[hits[0]])

    def __call__(self, x) -> float:
        return evaluate(self, x)


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def coefficient_rows(n: int, d: int, m: int, seed) -> np.ndarray:
    """(m, L) coefficient matrix; row i comes from the i-th child stream of seed.

    Child streams make the first rows independent of m: asking for more
    polynomials later extends the ensemble without reshuffling earlier draws.
    """
    if m < 0:
        raise ValueError("need m >= 0")
    exps = enumerate_multiindices(n, d)
    sig = _coefficient_sigmas(exps, d)
    rows = np.empty((m, exps.shape[0]))
    for i, child in enumerate(_seed_sequence(seed).spawn(m)):
        rng = np.random.Generator(np.random.PCG64(child))
        rows[i] = rng.standard_normal(exps.shape[0]) * sig
    return rows


def sample_coefficient_block(n: int, d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, L) coefficient matrix from a single stream, for bulk Monte Carlo."""
    exps = enumerate_multiindices(n, d)
    sig = _coefficient_sigmas(exps, d)
    return rng.standard_normal((count, exps.shape[0])) * sig


def sample_kss(n: int, d: int, m: int, seed) -> list[KssPolynomial]:
    """m independent polynomials; deterministic in (n, d, m, seed).

    Polynomial i depends only on seed and i, so sample_kss(n, d, m2, seed)
    with m2 > m starts with the same m polynomials.
    """
    exps = enumerate_multiindices(n, d)
    rows = coefficient_rows(n, d, m, seed)
    return [KssPolynomial(n, d, exps, rows[i]) for i in range(m)]


def monomial_matrix(n: int, d: int, points) -> np.ndarray:
    """(L, P) values of every monomial x^alpha at P points, rows in lex order.

    Walks the lexicographic tree once, reusing the partial product of the
    first j coordinates for every monomial sharing that prefix.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[1] != n:
        raise ValueError(f"points have dimension {pts.shape[1]}, expected {n}")
    L = multiindex_count(n, d)
    if L > MAX_MONOMIALS:
        raise ValueError(
            f"{L} monomials exceeds the coefficient-space cap {MAX_MONOMIALS}"
        )
    P = pts.shape[0]
    out = np.empty((L, P))
    row = 0

    def rec(j: int, v: np.ndarray, budget: int) -> None:
        nonlocal row
        if j == n - 1:
            for k in range(budget + 1):
                out[row] = v
                row += 1
                if k < budget:
                    v = v * pts[:, j]
            return
        for k in range(budget + 1):
            rec(j + 1, v, budget - k)
            if k < budget:
                v = v * pts[:, j]

    rec(0, np.ones(P), d)
    assert row == L
    return out


def evaluate(p: KssPolynomial, x) -> float:
    """P(x) via the shared-prefix monomial sweep."""
    xv = np.asarray(x, dtype=float)
    if xv.ndim != 1 or xv.shape[0] != p.n:
        raise ValueError(f"point must be a length-{p.n} vector")
    mono = monomial_matrix(p.n, p.d, xv[None, :])[:, 0]
    return float(p.coeffs @ mono)


def kernel_value(x, y, d: int) -> float:
    """Covariance E[P(x) P(y)] = ((1 + <x, y>)/2)^d for unit vectors."""
    if d < 0:
        raise ValueError("need d >= 0")
    xv = check_unit_vectors(x)[0]
    yv = check_unit_vectors(y)[0]
    if xv.shape != yv.shape:
        raise ValueError("points live in different dimensions")
    base = (1.0 + float(np.clip(xv @ yv, -1.0, 1.0))) / 2.0
    return _kernel_power(np.array([base]), d)[0]


def _kernel_power(base: np.ndarray, d: int) -> np.ndarray:
    """base**d, evaluated in log space for small bases; underflow lands at 0."""
    if d == 0:
        return np.ones_like(base)
    out = np.zeros_like(base)
    big = base >= 1e-3
    out[big] = base[big] ** d
    small = (~big) & (base > 0.0)
    out[small] = np.exp(d * np.log(base[small]))
    return out


@dataclass(frozen=True)
class KernelMatrix:
    """Covariance matrix of evaluations at fixed points; unit diagonal."""

    entries: np.ndarray
    d: int

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError("entries must be square")
        object.__setattr__(self, "entries", e)


def kernel_matrix(points_or_code, d: int) -> KernelMatrix:
    """Kernel covariance ((1 + <q_s, q_t>)/2)^d with the diagonal pinned to 1."""
    if d < 0:
        raise ValueError("need d >= 0")
    if isinstance(points_or_code, SphericalCode):
        pts = points_or_code.points
    else:
        pts = check_unit_vectors(points_or_code)
    base = (1.0 + np.clip(pts @ pts.T, -1.0, 1.0)) / 2.0
    V = _kernel_power(base, d)
    np.fill_diagonal(V, 1.0)
    return KernelMatrix(V, d)


def sample_evaluations(points, d: int, m: int, seed) -> np.ndarray:
    """(m, P) matrix whose rows are draws of (P(x_1), ..., P(x_P)).

    Exact sampler in evaluation space: factor the kernel covariance by a
    symmetric eigendecomposition with eigenvalues floored at 0, then push
    standard normals through the factor.
    """
    pts = check_unit_vectors(points)
    V = kernel_matrix(pts, d).entries
    lam, U = np.linalg.eigh(V)
    factor = U * np.sqrt(np.clip(lam, 0.0, None))
    rng = np.random.Generator(np.random.PCG64(_seed_sequence(seed)))
    z = rng.standard_normal((m, pts.shape[0]))
    return z @ factor.T


def save_polynomial(path, p: KssPolynomial) -> None:
    """Write 'n d' then one line 'alpha_1 ... alpha_n coefficient' per monomial."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{p.n} {p.d}\n")
        for a, c in zip(p.exponents, p.coeffs):
            fh.write(" ".join(str(int(k)) for k in a) + " " + format(c, ".17g") + "\n")


def load_polynomial(path) -> KssPolynomial:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("expected header line 'n d'")
        n, d = int(header[0]), int(header[1])
        body = np.loadtxt(fh, ndmin=2)
    exps = body[:, :n].astype(np.int64)
    coeffs = body[:, n]
    want = enumerate_multiindices(n, d)
    if exps.shape != want.shape or not np.array_equal(exps, want):
        raise ValueError("exponent rows are not the lexicographic enumeration")
    return KssPolynomial(n, d, want, coeffs)
