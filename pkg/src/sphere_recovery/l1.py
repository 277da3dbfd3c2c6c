"""l1-minimizing recovery programs: equality and noise-ball constrained.

solve_bp:    minimize ||c||_1  subject to  M c = b
solve_bpdn:  minimize ||c||_1  subject to  ||M c - b||_2 <= tau

One operator-splitting scheme covers both: split (c, z) along the graph
{z = M c}, alternate the proximal step of ||c||_1 + ball-indicator with the
Euclidean projection onto the graph, over-relax the proximal iterate, and
rescale the columns of M first (diagonal preconditioner) so the shrinkage
step treats every coordinate alike.  tau = 0 simply replaces the ball with
the single point b.  The graph projection reuses one Cholesky factorization;
the scaled multiplier converges to the dual vector of the ball constraint and
is reported for optimality checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.optimize import linprog

__all__ = [
    "RecoveryProblem",
    "RecoverySolution",
    "KktReport",
    "solve",
    "solve_bp",
    "solve_bpdn",
    "lp_oracle_bp",
    "check_kkt",
]

MAX_ITER = 200_000
ABS_TOL = 1e-9
REL_TOL = 1e-9
OVER_RELAX = 1.8

# Feasibility slack allowed by the contracts.
BP_FEAS_RTOL = 1e-8
BPDN_FEAS_RTOL = 1e-8

# Active-set polish: first attempt (the schedule then doubles), certified-gap
# acceptance level, largest candidate support tried (prefixes of the
# magnitude ordering), and per-call budget of expensive certificate searches.
POLISH_FIRST = 250
POLISH_GAP_RTOL = 1e-9
POLISH_MAX_SUPPORT = 48
POLISH_CERT_BUDGET = 6

# Size guard for the simplex-based oracle (tests only).
ORACLE_MAX_SIZE = 40


@dataclass(frozen=True)
class RecoveryProblem:
    """Data (M, b, tau) of one recovery instance; tau = 0 means equality."""

    matrix: np.ndarray
    moments: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        b = np.asarray(self.moments, dtype=float).ravel()
        if M.ndim != 2:
            raise ValueError("matrix must be 2-D")
        if b.shape[0] != M.shape[0]:
            raise ValueError("moments length must match the matrix row count")
        if not np.isfinite(self.tau) or self.tau < 0.0:
            raise ValueError("tau must be finite and >= 0")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(b))):
            raise ValueError("matrix and moments must be finite")
        object.__setattr__(self, "matrix", M)
        object.__setattr__(self, "moments", b)


@dataclass
class RecoverySolution:
    """Solver output; status is 'optimal', 'max-iter', or 'infeasible'."""

    c_star: np.ndarray
    residual_norm: float
    l1_value: float
    iterations: int
    status: str
    dual: np.ndarray | None = None
    primal_residual: float = 0.0
    dual_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "l1_value": self.l1_value,
            "c_star": [float(x) for x in self.c_star],
        }


class _GraphProjector:
    """Euclidean projection onto {(c, z) : z = M c}, factored once."""

    def __init__(self, M: np.ndarray):
        self.M = M
        m, N = M.shape
        if m <= N:
            self.row_mode = True
            G = np.eye(m) + M @ M.T
        else:
            self.row_mode = False
            G = np.eye(N) + M.T @ M
        self.cho = scipy.linalg.cho_factor(G)

    def __call__(self, c0: np.ndarray, z0: np.ndarray):
        rhs = c0 + self.M.T @ z0
        if self.row_mode:
            # (I + M M')^{-1} through the matrix inversion lemma.
            s = scipy.linalg.cho_solve(self.cho, self.M @ rhs, check_finite=False)
            c = rhs - self.M.T @ s
        else:
            c = scipy.linalg.cho_solve(self.cho, rhs, check_finite=False)
        return c, self.M @ c


def _soft(v: np.ndarray, t) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _project_ball(v: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    if radius == 0.0:
        return center.copy()
    gap = v - center
    norm = np.linalg.norm(gap)
    if norm <= radius:
        return v.copy()
    return center + gap * (radius / norm)


def _bpdn_active_fit(Ms, b, sgn, tau):
    """Boundary solution with fixed sign pattern: Ms' (Ms c - b) = -lam sgn.

    Returns (c_S, lam) with ||Ms c_S - b|| = tau, or None when the pattern
    cannot reach the ball boundary.
    """
    gram = Ms.T @ Ms
    rhs0 = Ms.T @ b

    def fit(lam):
        cs, *_ = np.linalg.lstsq(gram, rhs0 - lam * sgn, rcond=None)
        return cs

    def excess(lam):
        return float(np.linalg.norm(Ms @ fit(lam) - b)) - tau

    if excess(0.0) > 0.0:
        return None
    hi = max(1.0, float(np.abs(rhs0).max(initial=1.0)))
    for _ in range(80):
        if excess(hi) > 0.0:
            break
        hi *= 2.0
    else:
        return None
    lam = scipy.optimize.brentq(excess, 0.0, hi, xtol=1e-15, rtol=1e-15)
    if lam <= 0.0:
        return None
    return fit(lam), lam


def _bp_dual_certificate(M, support, sgn, sweeps=100, inner_tol=1e-10, patient=False):
    """Dual vector with M_S' nu = sgn and |M' nu| <= 1 + inner_tol everywhere.

    The support equations leave an affine family.  Start from the member
    minimizing the off-support energy ||M_{S^c}' nu||^2 (penalty solve plus an
    exact correction).  Degenerate instances put the certificate exactly on
    the |g_j| = 1 face of clustered neighbor columns, so violators are first
    exchanged in as forced +-1 equalities (fast when it works); whatever
    violation survives the exchange rounds goes to Dykstra's alternating
    projections between the affine set and the slabs |m_j' nu| <= 1, which
    converge whenever the certificate set is nonempty.
    """
    m, N = M.shape
    support = np.asarray(support)
    sgn = np.asarray(sgn, dtype=float)

    def energy_member(eq_cols, eq_rhs):
        mask = np.ones(N, dtype=bool)
        mask[eq_cols] = False
        C = M[:, eq_cols].T
        A = np.vstack([1e8 * C, M[:, mask].T])
        y = np.concatenate([1e8 * eq_rhs, np.zeros(int(mask.sum()))])
        nu, *_ = np.linalg.lstsq(A, y, rcond=None)
        corr, *_ = np.linalg.lstsq(C, eq_rhs - C @ nu, rcond=None)
        return nu + corr

    eq_cols = list(int(j) for j in support)
    eq_rhs = list(float(s) for s in sgn)
    nu = None
    for _ in range(8):
        trial = energy_member(eq_cols, np.asarray(eq_rhs))
        if float(np.abs(M[:, support].T @ trial - sgn).max(initial=0.0)) > 1e-8:
            break
        nu = trial
        g = M.T @ nu
        over = np.abs(g) - 1.0
        over[eq_cols] = 0.0
        violators = np.flatnonzero(over > inner_tol)
        if violators.size == 0:
            return nu
        if len(eq_cols) + violators.size >= m:
            break
        for j in violators:
            eq_cols.append(int(j))
            eq_rhs.append(float(np.sign(g[j])))

    if nu is None:
        nu = energy_member([int(j) for j in support], sgn)
        if float(np.abs(M[:, support].T @ nu - sgn).max(initial=0.0)) > 1e-8:
            return None

    C = M[:, support].T
    pin = np.linalg.pinv(C)
    nu = nu - pin @ (C @ nu - sgn)
    colsq = np.einsum("ij,ij->j", M, M)
    memory: dict[int, np.ndarray] = {}
    start = None
    for sweep in range(sweeps):
        g = M.T @ nu
        over = np.abs(g) - 1.0
        over[support] = 0.0
        worst = float(over.max(initial=0.0))
        if worst <= inner_tol:
            return nu
        if start is None:
            start = worst
            if start > 0.15 and not patient:
                return None
        if not patient:
            if sweep == 25 and worst > 0.5 * start:
                return None
            if sweep == 50 and worst > 0.25 * start:
                return None
        for j in np.flatnonzero(over > inner_tol):
            if int(j) not in memory:
                memory[int(j)] = np.zeros(m)
        for j, p in memory.items():
            yv = nu + p
            t = float(M[:, j] @ yv)
            tc = min(1.0, max(-1.0, t))
            x = yv if t == tc else yv - ((t - tc) / colsq[j]) * M[:, j]
            memory[j] = yv - x
            nu = x
        nu = nu - pin @ (C @ nu - sgn)
    return None


def _certified_polish(M, b, tau, c_guess, nb):
    """Finish a solve exactly from the active set of a nearly-settled iterate.

    Candidate active sets come from a nonnegative least-squares fit (when the
    iterate is sign-consistent) and from top-j magnitude prefixes, sparsest
    first.  Each candidate gets the small restricted system solved and a dual
    vector reconstructed; acceptance requires the duality gap of the rescaled
    (hence dual-feasible) vector to certify the l1 value to POLISH_GAP_RTOL.
    Weak duality makes acceptance sound no matter how the candidate was
    produced.  Returns (c, nu, residual_norm) or None.
    """
    am = np.abs(c_guess)
    if float(am.max(initial=0.0)) <= 0.0:
        return None
    m, N = M.shape

    candidates = []
    seen = set()

    def push(support, cs_known=None):
        support = np.asarray(support, dtype=int)
        if support.size == 0 or support.size > min(m, POLISH_MAX_SUPPORT):
            return
        key = support.tobytes()
        if key not in seen:
            seen.add(key)
            candidates.append((support, cs_known))

    # Sign-consistent iterates: the nonnegative least-squares active set
    # pinpoints clustered supports that pure magnitude ordering blurs.  The
    # fit itself is kept as the primal candidate; its trailing dust columns
    # stay in the support so the dual can sit flat across whole clusters.
    pos = float(np.maximum(c_guess, 0.0).sum())
    neg = float(np.maximum(-c_guess, 0.0).sum())
    orient = 1.0 if pos >= neg else -1.0
    if tau == 0.0:
        try:
            x_nn, rnorm = scipy.optimize.nnls(M, orient * b)
        except RuntimeError:
            x_nn = None
        if x_nn is not None and rnorm <= 0.5 * BP_FEAS_RTOL * (1.0 + nb):
            keep = x_nn > 1e-10 * float(x_nn.max(initial=0.0))
            push(np.flatnonzero(keep), orient * x_nn[keep])
            push(np.flatnonzero(x_nn > 0.0), orient * x_nn[x_nn > 0.0])

    order = np.argsort(-am, kind="stable")
    for j in range(1, min(m, N, POLISH_MAX_SUPPORT) + 1):
        push(np.sort(order[:j]))

    cert_calls = 0
    for support, cs_known in candidates:
        if cert_calls >= POLISH_CERT_BUDGET:
            break
        Ms = M[:, support]
        if tau == 0.0:
            if cs_known is not None:
                cs = cs_known
            else:
                cs, *_ = np.linalg.lstsq(Ms, b, rcond=None)
            nr = float(np.linalg.norm(Ms @ cs - b))
            if nr > 0.5 * BP_FEAS_RTOL * (1.0 + nb):
                continue
            live = np.abs(cs) > 1e-14 * max(float(np.abs(cs).max(initial=0.0)), 1.0)
            if not np.any(live):
                continue
            cert_support = support if cs_known is not None else support[live]
            cert_sgn = np.sign(cs) if cs_known is not None else np.sign(cs[live])
            cert_calls += 1
            # The nonnegative fit is the likeliest truth; give its flat
            # cluster certificate a longer leash.
            if cs_known is not None:
                nu = _bp_dual_certificate(M, cert_support, cert_sgn, sweeps=1200, patient=True)
            else:
                nu = _bp_dual_certificate(M, cert_support, cert_sgn)
            if nu is None:
                continue
        else:
            sgn = np.sign(c_guess[support])
            pair = _bpdn_active_fit(Ms, b, sgn, tau)
            if pair is None:
                continue
            cs, lam = pair
            nr = float(np.linalg.norm(Ms @ cs - b))
            if abs(nr - tau) > 1e-10 * (1.0 + tau):
                continue
            live = np.abs(cs) > 1e-12 * float(np.abs(cs).max(initial=0.0))
            if np.any(np.sign(cs[live]) != sgn[live]):
                continue
            nu = (b - Ms @ cs) / lam
        g = M.T @ nu
        scale = max(1.0, float(np.abs(g).max(initial=0.0)))
        nu_feas = nu / scale
        l1 = float(np.abs(cs).sum())
        dual_value = float(b @ nu_feas) - tau * float(np.linalg.norm(nu_feas))
        if l1 - dual_value > POLISH_GAP_RTOL * (1.0 + l1):
            continue
        c = np.zeros(N)
        c[support] = cs
        return c, nu_feas, nr
    return None


def solve_bp(M, b, **kwargs) -> RecoverySolution:
    """Equality-constrained l1 minimization (tau = 0)."""
    return solve(RecoveryProblem(M, b, 0.0), **kwargs)


def solve_bpdn(M, b, tau: float, **kwargs) -> RecoverySolution:
    """Ball-constrained l1 minimization; requires tau > 0."""
    if not (tau > 0.0):
        raise ValueError("solve_bpdn needs tau > 0; use solve_bp for equality")
    return solve(RecoveryProblem(M, b, tau), **kwargs)


def solve(
    problem: RecoveryProblem,
    *,
    abs_tol: float = ABS_TOL,
    rel_tol: float = REL_TOL,
    max_iter: int = MAX_ITER,
    rho: float = 1.0,
    over_relax: float = OVER_RELAX,
) -> RecoverySolution:
    M, b, tau = problem.matrix, problem.moments, problem.tau
    m, N = M.shape
    nb = float(np.linalg.norm(b))

    if nb <= tau:
        # 0 is feasible and uniquely l1-minimal (covers b = 0, tau = 0).
        return RecoverySolution(
            np.zeros(N), nb, 0.0, 0, "optimal", dual=np.zeros(m)
        )

    c_ls, *_ = np.linalg.lstsq(M, b, rcond=None)
    rho0 = float(np.linalg.norm(M @ c_ls - b))
    if tau == 0.0:
        if rho0 > BP_FEAS_RTOL * (1.0 + nb):
            return RecoverySolution(np.zeros(N), nb, 0.0, 0, "infeasible")
    elif rho0 > tau * (1.0 + BPDN_FEAS_RTOL):
        return RecoverySolution(np.zeros(N), nb, 0.0, 0, "infeasible")

    # Diagonal preconditioner: unit-norm columns; weights carry the scaling
    # back into the l1 term.  The moment scale is divided out so tolerances
    # mean the same thing for every instance.
    colnorm = np.linalg.norm(M, axis=0)
    colnorm[colnorm == 0.0] = 1.0
    Mh = M / colnorm[None, :]
    bh = b / nb
    tauh = tau / nb
    wgt = 1.0 / colnorm

    project = _GraphProjector(Mh)
    alpha = over_relax

    wc = np.zeros(N)
    wz = np.zeros(m)
    uc = np.zeros(N)
    uz = np.zeros(m)

    status = "max-iter"
    iterations = max_iter
    pri = dua = np.inf
    next_polish = POLISH_FIRST
    for it in range(1, max_iter + 1):
        hc = _soft(wc - uc, wgt / rho)
        hz = _project_ball(wz - uz, bh, tauh)
        rc = alpha * hc + (1.0 - alpha) * wc
        rz = alpha * hz + (1.0 - alpha) * wz
        pc, pz = project(rc + uc, rz + uz)
        uc += rc - pc
        uz += rz - pz
        dc = hc - pc
        dz = hz - pz
        pri = np.sqrt(dc @ dc + dz @ dz)
        ec = pc - wc
        ez = pz - wz
        dua = rho * np.sqrt(ec @ ec + ez @ ez)
        wc, wz = pc, pz
        nh = np.sqrt(hc @ hc + hz @ hz)
        nw = np.sqrt(wc @ wc + wz @ wz)
        nu = rho * np.sqrt(uc @ uc + uz @ uz)
        if pri <= abs_tol + rel_tol * max(nh, nw) and dua <= abs_tol + rel_tol * nu:
            status = "optimal"
            iterations = it
            break
        if it == next_polish:
            # Ill-conditioned instances settle on the right active set long
            # before the residuals crawl under tolerance; a certified finish
            # from that set short-circuits the tail.  Doubling the schedule
            # keeps the total polish cost logarithmic in the iteration count.
            next_polish *= 2
            polished = _certified_polish(M, b, tau, hc * (nb / colnorm), nb)
            if polished is not None:
                c, nu_feas, nr = polished
                return RecoverySolution(
                    c_star=c,
                    residual_norm=nr,
                    l1_value=float(np.abs(c).sum()),
                    iterations=it,
                    status="optimal",
                    dual=nu_feas,
                    primal_residual=float(pri),
                    dual_residual=float(dua),
                )
        if it % 25 == 0:
            # Residual balancing; the graph projection is rho-free, so the
            # penalty can move without refactoring.
            if pri > 10.0 * dua and rho < 1e6:
                rho *= 2.0
                uc *= 0.5
                uz *= 0.5
            elif dua > 10.0 * pri and rho > 1e-6:
                rho *= 0.5
                uc *= 2.0
                uz *= 2.0

    dual = rho * uz
    c = hc * (nb / colnorm)

    if status == "max-iter":
        polished = _certified_polish(M, b, tau, c, nb)
        if polished is not None:
            c, nu_feas, nr = polished
            return RecoverySolution(
                c_star=c,
                residual_norm=nr,
                l1_value=float(np.abs(c).sum()),
                iterations=iterations,
                status="optimal",
                dual=nu_feas,
                primal_residual=float(pri),
                dual_residual=float(dua),
            )

    # Feasibility restoration: the prox iterate keeps exact zeros but may sit
    # a hair outside the constraint set; shift it back along a least-squares
    # direction so the contract residual bound holds exactly.
    r = M @ c - b
    nr = float(np.linalg.norm(r))
    target = 0.5 * BP_FEAS_RTOL * (1.0 + nb) if tau == 0.0 else tau
    if nr > target:
        delta, *_ = np.linalg.lstsq(M, r, rcond=None)
        r_range = M @ delta
        r_perp = r - r_range
        np_ = float(np.linalg.norm(r_perp))
        if tau == 0.0:
            c = c - delta
        else:
            nrange = float(np.linalg.norm(r_range))
            if nrange > 0.0 and tau > np_:
                s = np.sqrt(max(tau**2 - np_**2, 0.0)) / nrange
                s = min(s, 1.0)
            else:
                s = 0.0
            c = c - (1.0 - s) * delta
        r = M @ c - b
        nr = float(np.linalg.norm(r))

    return RecoverySolution(
        c_star=c,
        residual_norm=nr,
        l1_value=float(np.abs(c).sum()),
        iterations=iterations,
        status=status,
        dual=dual,
        primal_residual=float(pri),
        dual_residual=float(dua),
    )


def lp_oracle_bp(M, b) -> RecoverySolution:
    """Exact basis pursuit through the split linear program.

    min sum(p + q) s.t. M(p - q) = b, p, q >= 0, handed to a simplex-style LP
    solver.  Independent of the operator-splitting path; sized for tests.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    m, N = M.shape
    if m > ORACLE_MAX_SIZE or N > ORACLE_MAX_SIZE:
        raise ValueError(f"oracle is limited to {ORACLE_MAX_SIZE} rows/columns")
    res = linprog(
        np.ones(2 * N),
        A_eq=np.hstack([M, -M]),
        b_eq=b,
        bounds=(0.0, None),
        method="highs",
    )
    if res.status == 2:
        return RecoverySolution(np.zeros(N), float(np.linalg.norm(b)), 0.0, 0, "infeasible")
    if not res.success:
        raise RuntimeError(f"oracle LP failed: {res.message}")
    c = res.x[:N] - res.x[N:]
    # Equality-constraint marginals are the dual certificate: reduced costs
    # 1 -+ (M' y)_j >= 0 give |M' y| <= 1 with equality on the support.
    dual = np.asarray(res.eqlin.marginals, dtype=float)
    return RecoverySolution(
        c_star=c,
        residual_norm=float(np.linalg.norm(M @ c - b)),
        l1_value=float(res.fun),
        iterations=int(res.nit),
        status="optimal",
        dual=dual,
    )


@dataclass
class KktReport:
    """Optimality certificate check for a claimed solution of BP/BPDN."""

    max_violation: float
    feasibility: float
    gradient_bound: float
    support_sign: float
    alignment: float
    complementary: float
    dual: np.ndarray = field(repr=False, default=None)


def _reconstruct_dual(M, b, tau, c, support) -> np.ndarray:
    m = M.shape[0]
    r = M @ c - b
    nr = np.linalg.norm(r)
    if tau == 0.0:
        if support.size == 0:
            return np.zeros(m)
        nu, *_ = np.linalg.lstsq(M[:, support].T, np.sign(c[support]), rcond=None)
        return nu
    # a nonzero minimizer forces the ball constraint active, so reconstruct
    # along the residual whenever c != 0; slack shows up as complementary
    # slackness instead
    if nr == 0.0 or support.size == 0:
        return np.zeros(m)
    rhat = r / nr
    g0 = M.T @ rhat
    denom = float(g0[support] @ g0[support])
    lam = 0.0 if denom == 0.0 else max(0.0, -float(np.sign(c[support]) @ g0[support]) / denom)
    return -lam * rhat


def check_kkt(M, b, tau, c, dual=None, support_tol: float | None = None) -> KktReport:
    """Measure how far (c, dual) sits from the first-order optimality system.

    Checks: ball/equality feasibility, |M' nu| <= 1 everywhere, equality with
    matching sign on the support, anti-alignment of nu with the residual, and
    complementary slackness.  When no dual is supplied one is reconstructed
    from the support (least squares for tau = 0, residual direction else).
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    if tau < 0.0:
        raise ValueError("tau must be >= 0")
    if support_tol is None:
        support_tol = 1e-7 * max(1.0, float(np.abs(c).max(initial=0.0)))
    support = np.flatnonzero(np.abs(c) > support_tol)

    r = M @ c - b
    nr = float(np.linalg.norm(r))
    feas = max(0.0, nr - tau) if tau > 0.0 else nr

    nu = np.asarray(dual, dtype=float).ravel() if dual is not None else None
    if nu is None:
        nu = _reconstruct_dual(M, b, tau, c, support)

    g = M.T @ nu
    grad_bound = max(0.0, float(np.abs(g).max(initial=0.0)) - 1.0)
    sign_viol = (
        float(np.abs(g[support] - np.sign(c[support])).max()) if support.size else 0.0
    )

    align = 0.0
    comp = 0.0
    if tau > 0.0:
        lam = float(np.linalg.norm(nu))
        if lam > 0.0 and nr > 0.0:
            align = float(np.linalg.norm(nu + lam * (r / nr)))
        elif lam > 0.0:
            align = lam
        comp = lam * max(0.0, tau - nr)

    max_violation = max(feas, grad_bound, sign_viol, align, comp)
    return KktReport(
        max_violation=max_violation,
        feasibility=feas,
        gradient_bound=grad_bound,
        support_sign=sign_viol,
        alignment=align,
        complementary=comp,
        dual=nu,
    )
