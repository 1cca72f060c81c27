# solvers.py
"""
Recovery solvers:
  - nuclear_min: argmin ||X||_* s.t. A(X) = y, by ADMM (affine projection + singular value thresholding)
  - rank_minimize: smallest r whose rank-r feasibility search (alternating least squares) succeeds
  - nullspace_rank_search: min ||A(X)||^2 over unit-norm rank-<=k X
  - det_oracle_2x2: exact enumeration of rank-<=1 solutions for n=2, m=3
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize

from errors import DimensionError, DomainError, RankDeficientError
from linalg import (
    RANK_REL_TOL,
    SvdMethod,
    child_rng,
    least_squares,
    matrix_rank,
    min_norm_solve,
    smallest_right_singular,
    svd,
)
from measurement import MeasurementOperator, apply, nullspace_basis, project_affine

logger = logging.getLogger(__name__)

SUCCESS_REL_ERROR = 1e-4
OPTIMALITY_TOL = 1e-4
ADMM_TOL = 1e-8
FOUND_TOL = 1e-10
NOT_FOUND_TOL = 1e-4
RESTART_DISAGREEMENT = 1e2
ALS_STALL_WINDOW = 200
ALS_STALL_RATIO = 0.5
POLISH_TOL = 1e-15
POLISH_MAX_EVALS = 500


@dataclass(frozen=True)
class SolverParams:
    max_iters: int = 5000
    constraint_tol: float = 1e-8
    step: float = 1.0
    restarts: int = 20
    inner_tol: float = 1e-12
    seed: int = 0
    svd_method: SvdMethod = "lapack"

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.restarts < 1:
            raise DomainError(f"restarts must be >= 1, got {self.restarts}")
        for name in ("constraint_tol", "step", "inner_tol"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if self.svd_method not in ("jacobi", "lapack"):
            raise DomainError(f"svd_method must be 'jacobi' or 'lapack', got {self.svd_method!r}")


@dataclass(frozen=True)
class RecoveryResult:
    x_hat: np.ndarray
    rank_hat: int
    residual: float
    iterations: int
    converged: bool
    method: str = ""
    optimality_gap: float | None = None


@dataclass(frozen=True)
class FeasibilityResult:
    x_best: np.ndarray
    residual: float
    restarts_used: int
    feasible: bool
    iterations: int = 0


def _measurements(op: MeasurementOperator, y: object) -> np.ndarray:
    vec = np.asarray(y, dtype=np.float64).reshape(-1)
    if vec.shape[0] != op.m:
        raise DimensionError(f"y has length {vec.shape[0]}, operator has m={op.m}")
    return vec


def relative_residual(op: MeasurementOperator, x: np.ndarray, y: np.ndarray) -> float:
    """||A(x) - y||_2 / max(||y||_2, 1)."""
    return float(np.linalg.norm(apply(op, x) - y) / max(float(np.linalg.norm(y)), 1.0))


# ----------------------------
# Singular value thresholding
# ----------------------------

def svt(x: object, tau: float, method: SvdMethod = "jacobi") -> np.ndarray:
    """Proximal map of tau * ||.||_*: soft-threshold the singular values."""
    if tau < 0.0:
        raise DomainError(f"tau must be >= 0, got {tau}")
    res = svd(x, method=method)
    shrunk = np.maximum(res.sigma - tau, 0.0)
    return (res.u * shrunk) @ res.v.T


# ----------------------------
# Nuclear-norm minimization
# ----------------------------

def _dual_gap(op: MeasurementOperator, g: np.ndarray, method: SvdMethod) -> float:
    """
    g = rho * u is a subgradient of ||.||_* at the thresholded iterate; the gap is the
    spectral norm of its component outside range(A*), relative to max(||g||_2, 1).
    """
    g_norm = float(svd(g, method=method).sigma[0])
    if op.m == 0:
        outside = g
    else:
        in_range = op.gram_factor.pinv_apply(op.flat @ g.reshape(-1)).reshape(op.n, op.n)
        outside = g - in_range
    return float(svd(outside, method=method).sigma[0]) / max(g_norm, 1.0)


def nuclear_min(op: MeasurementOperator, y: object, p: SolverParams) -> RecoveryResult:
    """
    ADMM on  min ||Z||_*  s.t.  X = Z, A(X) = y:
        X <- P_aff(Z - U);  Z <- svt(X + U, 1/rho);  U <- U + X - Z
    with residual balancing on rho (starting at p.step). Stops when the primal
    residual ||X - Z|| and dual residual rho ||Z - Z_prev|| fall below 1e-8 (relative).
    """
    vec = _measurements(op, y)
    if op.m > 0 and op.gram_factor is None:
        raise RankDeficientError(f"nuclear_min needs a full-row-rank operator (n={op.n}, m={op.m})")

    n = op.n
    rho = p.step
    z = np.zeros((n, n))
    u = np.zeros((n, n))
    x = project_affine(op, z, vec)
    stopped = False
    iterations = 0
    adapt_until = p.max_iters // 2

    for it in range(1, p.max_iters + 1):
        iterations = it
        x = project_affine(op, z - u, vec)
        z_prev = z
        z = svt(x + u, 1.0 / rho, method=p.svd_method)
        u = u + x - z

        r_primal = float(np.linalg.norm(x - z))
        r_dual = rho * float(np.linalg.norm(z - z_prev))
        primal_scale = max(float(np.linalg.norm(x)), float(np.linalg.norm(z)), 1.0)
        dual_scale = max(rho * float(np.linalg.norm(u)), 1.0)
        if r_primal <= ADMM_TOL * primal_scale and r_dual <= ADMM_TOL * dual_scale:
            stopped = True
            break

        if it % 10 == 0 and it < adapt_until:
            if r_primal > 10.0 * r_dual:
                rho *= 2.0
                u /= 2.0
            elif r_dual > 10.0 * r_primal:
                rho /= 2.0
                u *= 2.0

    gap = _dual_gap(op, rho * u, p.svd_method)
    residual = relative_residual(op, x, vec)
    converged = stopped and residual <= p.constraint_tol and gap <= OPTIMALITY_TOL
    if not converged:
        logger.info(
            "nuclear_min not converged: iters=%d residual=%.3e gap=%.3e stopped=%s",
            iterations, residual, gap, stopped,
        )
    return RecoveryResult(
        x_hat=x,
        rank_hat=matrix_rank(x, RANK_REL_TOL, method=p.svd_method),
        residual=residual,
        iterations=iterations,
        converged=converged,
        method="nuclear_min",
        optimality_gap=gap,
    )


# ----------------------------
# Rank feasibility (alternating least squares)
# ----------------------------

def _solve_block(design: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if design.shape[0] >= design.shape[1]:
        return least_squares(design, rhs)
    return min_norm_solve(design, rhs)


def _factor_jacobian(sensing: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """d<A_i, U V^T>/d(U, V): A_i V in the U block, A_i^T U in the V block."""
    m, n, _ = sensing.shape
    r = u.shape[1]
    ju = np.einsum("ijk,kl->ijl", sensing, v).reshape(m, n * r)
    jv = np.einsum("ijk,jl->ikl", sensing, u).reshape(m, n * r)
    return np.hstack([ju, jv])


def _als_run(
    op: MeasurementOperator,
    y: np.ndarray,
    r: int,
    p: SolverParams,
    gen: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Alternating least squares from a Gaussian start; returns (U, V, residual, iterations)."""
    n, m = op.n, op.m
    sensing = op.sensing
    denom = max(float(np.linalg.norm(y)), 1.0)

    u = gen.standard_normal((n, r)) / math.sqrt(n)
    v = gen.standard_normal((n, r)) / math.sqrt(n)
    prev = math.inf
    res = math.inf
    window_start = math.inf
    it = 0
    for it in range(1, p.max_iters + 1):
        # <A_i, U V^T> is linear in V with coefficients A_i^T U, and in U with A_i V
        v = _solve_block(np.einsum("ijk,jl->ikl", sensing, u).reshape(m, n * r), y).reshape(n, r)
        u = _solve_block(np.einsum("ijk,kl->ijl", sensing, v).reshape(m, n * r), y).reshape(n, r)
        q, rr = np.linalg.qr(u)
        u, v = q, v @ rr.T

        res = float(np.linalg.norm(op.flat @ (u @ v.T).reshape(-1) - y)) / denom
        if res <= p.constraint_tol:
            break
        if math.isfinite(prev) and prev - res <= p.inner_tol * prev:
            break
        prev = res
        if it % ALS_STALL_WINDOW == 0:
            # slow linear convergence: hand over to the Gauss-Newton polish
            if res > ALS_STALL_RATIO * window_start:
                break
            window_start = res
    return u, v, res, it


def _polish_factors(
    op: MeasurementOperator,
    y: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Levenberg-Marquardt on the joint residual A(U V^T) - y, started from an ALS iterate."""
    n, r = u.shape
    sensing = op.sensing
    denom = max(float(np.linalg.norm(y)), 1.0)

    def split(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return theta[: n * r].reshape(n, r), theta[n * r:].reshape(n, r)

    def residuals(theta: np.ndarray) -> np.ndarray:
        uu, vv = split(theta)
        return op.flat @ (uu @ vv.T).reshape(-1) - y

    def jacobian(theta: np.ndarray) -> np.ndarray:
        return _factor_jacobian(sensing, *split(theta))

    # "lm" needs at least as many residuals as unknowns
    method = "lm" if op.m >= 2 * n * r else "trf"
    fit = optimize.least_squares(
        residuals,
        np.concatenate([u.reshape(-1), v.reshape(-1)]),
        jac=jacobian,
        method=method,
        xtol=POLISH_TOL,
        ftol=POLISH_TOL,
        gtol=POLISH_TOL,
        max_nfev=POLISH_MAX_EVALS,
    )
    uu, vv = split(fit.x)
    res = float(np.linalg.norm(residuals(fit.x))) / denom
    return uu, vv, res, int(fit.nfev)


def _feasibility_run(
    op: MeasurementOperator,
    y: np.ndarray,
    r: int,
    p: SolverParams,
    gen: np.random.Generator,
) -> tuple[np.ndarray, float, int]:
    u, v, res, its = _als_run(op, y, r, p, gen)
    if res > p.constraint_tol and op.m > 0:
        pu, pv, polished, evals = _polish_factors(op, y, u, v)
        its += evals
        if np.isfinite(polished) and polished < res:
            logger.debug("ALS residual %.3e polished to %.3e in %d evaluations", res, polished, evals)
            u, v, res = pu, pv, polished
    return u @ v.T, res, its


class _Restart(NamedTuple):
    index: int
    value: float
    payload: object


def _run_restarts(
    p: SolverParams,
    run: Callable[[int], tuple[float, object]],
    done: Callable[[float], bool],
    label: str,
) -> tuple[_Restart | None, int, list[float]]:
    """
    Runs `run(i)` for restarts i = 0, 1, ... keeping the lowest value (ties -> lower index).
    Stops early once `done(value)`. The budget doubles once when the two best values
    differ by more than RESTART_DISAGREEMENT.
    """
    budget = p.restarts
    doubled = False
    best: _Restart | None = None
    values: list[float] = []
    i = 0
    while i < budget:
        try:
            value, payload = run(i)
        except RankDeficientError as e:
            logger.info("%s: restart %d consumed by degenerate subproblem: %s", label, i, e)
            i += 1
            continue
        values.append(value)
        if best is None or value < best.value:
            best = _Restart(i, value, payload)
        i += 1
        if done(value):
            break
        if i == budget and not doubled and len(values) >= 2:
            lo, hi = sorted(values)[:2]
            if hi > RESTART_DISAGREEMENT * max(lo, 1e-300):
                budget *= 2
                doubled = True
                logger.info("%s: best restarts disagree (%.3e vs %.3e); doubling to %d", label, lo, hi, budget)
    return best, i, values


def rank_feasibility(op: MeasurementOperator, y: object, r: int, p: SolverParams) -> FeasibilityResult:
    """Searches for X = U V^T (width r) with A(X) = y; feasible iff the best residual <= constraint_tol."""
    vec = _measurements(op, y)
    n = op.n
    if not 0 <= r <= n:
        raise DomainError(f"rank r must satisfy 0 <= r <= n={n}, got {r}")

    denom = max(float(np.linalg.norm(vec)), 1.0)
    if r == 0:
        residual = float(np.linalg.norm(vec)) / denom
        return FeasibilityResult(np.zeros((n, n)), residual, 0, residual <= p.constraint_tol)

    iterations = 0

    def run(i: int) -> tuple[float, object]:
        nonlocal iterations
        x, res, its = _feasibility_run(op, vec, r, p, child_rng(p.seed, r, i))
        iterations += its
        return res, x

    best, used, _ = _run_restarts(p, run, lambda v: v <= p.constraint_tol, f"rank_feasibility(r={r})")
    if best is None:
        residual = float(np.linalg.norm(vec)) / denom
        return FeasibilityResult(np.zeros((n, n)), residual, used, residual <= p.constraint_tol, iterations)
    return FeasibilityResult(
        x_best=best.payload,
        residual=best.value,
        restarts_used=used,
        feasible=best.value <= p.constraint_tol,
        iterations=iterations,
    )


def rank_minimize(op: MeasurementOperator, y: object, r_max: int, p: SolverParams) -> RecoveryResult:
    """Smallest r in 0..r_max with a feasible rank-r point."""
    vec = _measurements(op, y)
    if not 0 <= r_max <= op.n:
        raise DomainError(f"r_max must satisfy 0 <= r_max <= n={op.n}, got {r_max}")

    total_iters = 0
    last: FeasibilityResult | None = None
    for r in range(r_max + 1):
        last = rank_feasibility(op, vec, r, p)
        total_iters += last.iterations
        if last.feasible:
            break

    assert last is not None
    return RecoveryResult(
        x_hat=last.x_best,
        rank_hat=matrix_rank(last.x_best, RANK_REL_TOL, method=p.svd_method),
        residual=last.residual,
        iterations=total_iters,
        converged=last.feasible,
        method="rank_min",
    )


# ----------------------------
# Null space vs. rank-k manifold
# ----------------------------

class UnicityVerdict(str, enum.Enum):
    FOUND = "FOUND"
    NOT_FOUND = "NOT FOUND"
    INCONCLUSIVE = "INCONCLUSIVE"


def classify_objective(objective: float) -> UnicityVerdict:
    if objective <= FOUND_TOL:
        return UnicityVerdict.FOUND
    if objective >= NOT_FOUND_TOL:
        return UnicityVerdict.NOT_FOUND
    return UnicityVerdict.INCONCLUSIVE


class NullspaceSearch(NamedTuple):
    objective: float
    witness: np.ndarray

    @property
    def verdict(self) -> UnicityVerdict:
        return classify_objective(self.objective)


def _unit_rank_k(n: int, k: int) -> np.ndarray:
    w = np.zeros((n, n))
    w[np.arange(k), np.arange(k)] = 1.0 / math.sqrt(k)
    return w


def _nullspace_als(
    op: MeasurementOperator,
    k: int,
    p: SolverParams,
    gen: np.random.Generator,
) -> tuple[float, np.ndarray]:
    n, m = op.n, op.m
    sensing = op.sensing
    u, _ = np.linalg.qr(gen.standard_normal((n, k)) / math.sqrt(n))
    prev = math.inf
    objective = math.inf
    witness = _unit_rank_k(n, k)

    for _ in range(p.max_iters):
        # U orthonormal => ||U V^T||_F = ||V||_F: the unit-norm minimizer over V is a
        # smallest right singular vector of the design matrix
        s, vec_v = smallest_right_singular(
            np.einsum("ijk,jl->ikl", sensing, u).reshape(m, n * k), method=p.svd_method
        )
        v, _ = np.linalg.qr(vec_v.reshape(n, k))
        s, vec_u = smallest_right_singular(
            np.einsum("ijk,kl->ijl", sensing, v).reshape(m, n * k), method=p.svd_method
        )
        u_full = vec_u.reshape(n, k)
        objective = s * s
        witness = u_full @ v.T
        u, _ = np.linalg.qr(u_full)

        if objective <= FOUND_TOL:
            break
        if math.isfinite(prev) and prev - objective <= p.inner_tol * prev:
            break
        prev = objective

    witness = witness / max(float(np.linalg.norm(witness)), 1e-300)
    objective = float(np.sum(apply(op, witness) ** 2))
    return objective, witness


def nullspace_rank_search(op: MeasurementOperator, k: int, p: SolverParams) -> NullspaceSearch:
    """
    Smallest ||A(X)||_2^2 found over rank-<=k X with ||X||_F = 1. k = n is solved
    exactly from the null space of the flattened operator.
    """
    n = op.n
    if not 1 <= k <= n:
        raise DomainError(f"k must satisfy 1 <= k <= n={n}, got {k}")

    if op.m == 0:
        return NullspaceSearch(0.0, _unit_rank_k(n, k))

    if k == n:
        basis = nullspace_basis(op)
        if basis.shape[1] > 0:
            w = basis[:, 0].reshape(n, n)
        else:
            _, vec = smallest_right_singular(op.flat, method=p.svd_method)
            w = vec.reshape(n, n)
        w = w / float(np.linalg.norm(w))
        return NullspaceSearch(float(np.sum(apply(op, w) ** 2)), w)

    best, used, _ = _run_restarts(
        p,
        lambda i: _nullspace_als(op, k, p, child_rng(p.seed, k, i)),
        lambda v: v <= FOUND_TOL,
        f"nullspace_rank_search(k={k})",
    )
    if best is None:
        raise RankDeficientError(f"every restart of the null-space search failed (k={k}, {used} restarts)")
    return NullspaceSearch(best.value, best.payload)


# ----------------------------
# Exact oracle for n = 2, m = 3
# ----------------------------

@dataclass(frozen=True)
class OracleResult:
    minimal_rank: int
    solutions: list[np.ndarray] = field(default_factory=list)  # every rank-1 feasible matrix


def _det2(a: np.ndarray) -> float:
    return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])


def _quadratic_roots(a: float, b: float, c: float) -> list[float]:
    scale = max(abs(a), abs(b), abs(c))
    if scale == 0.0:
        raise RankDeficientError("det(X_p + tN) vanishes identically; every feasible point has rank <= 1")
    if abs(a) <= 1e-14 * scale:
        if abs(b) <= 1e-14 * scale:
            return []
        return [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    if disc == 0.0:
        return [-b / (2.0 * a)]
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = [q / a]
    if q != 0.0:
        roots.append(c / q)
    else:
        roots.append(-roots[0])
    return sorted(roots)


def det_oracle_2x2(op: MeasurementOperator, y: object) -> OracleResult:
    """
    Feasible set is the line X(t) = X_p + t N. det X(t) is quadratic in t; its real
    roots are exactly the feasible matrices of rank <= 1. Rank-0 (zero) roots are
    reported through minimal_rank = 0, not in `solutions`.
    """
    if op.n != 2 or op.m != 3:
        raise DomainError(f"det oracle needs n=2, m=3, got n={op.n}, m={op.m}")
    vec = _measurements(op, y)
    if op.gram_factor is None:
        raise RankDeficientError("det oracle needs a full-row-rank operator")

    basis = nullspace_basis(op)
    if basis.shape[1] != 1:
        raise RankDeficientError(f"null space has dimension {basis.shape[1]}, expected 1")
    null_dir = basis[:, 0].reshape(2, 2)
    x_p = project_affine(op, np.zeros((2, 2)), vec)

    a = _det2(null_dir)
    b = float(x_p[0, 0] * null_dir[1, 1] + null_dir[0, 0] * x_p[1, 1]
              - x_p[0, 1] * null_dir[1, 0] - null_dir[0, 1] * x_p[1, 0])
    c = _det2(x_p)

    scale = max(float(np.linalg.norm(x_p)), 1.0)
    solutions: list[np.ndarray] = []
    for t in _quadratic_roots(a, b, c):
        cand = x_p + t * null_dir
        if float(np.linalg.norm(cand)) <= 1e-12 * scale:
            continue
        if any(float(np.linalg.norm(cand - s)) <= 1e-12 * scale for s in solutions):
            continue
        solutions.append(cand)

    if float(np.linalg.norm(vec)) == 0.0:
        minimal_rank = 0
    elif solutions:
        minimal_rank = 1
    else:
        minimal_rank = 2
    return OracleResult(minimal_rank=minimal_rank, solutions=solutions)
