# linalg.py
"""
Small dense linear algebra for n <= ~40: a one-sided Jacobi SVD, rank detection,
norms, QR-based least squares and seeded Gaussian sampling.

Matrices are plain 2-D float64 numpy arrays; `as_matrix` is the single entry check
(2-D, non-empty, finite).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Union

import numpy as np
from scipy.linalg import solve_triangular

from errors import ConvergenceError, DimensionError, DomainError, RankDeficientError

Matrix = np.ndarray
SvdMethod = Literal["jacobi", "lapack"]
RngLike = Union[np.random.Generator, int]

RANK_REL_TOL = 1e-8
JACOBI_TOL = 1e-14
MAX_SWEEPS = 80
# |R_ii| below this fraction of max |R_jj| counts as a dependent column
QR_RANK_TOL = 1e-12


def as_matrix(x: object, name: str = "x") -> Matrix:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} must have positive dimensions, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains NaN or Inf entries")
    return a


def as_vector(b: object, name: str = "b") -> np.ndarray:
    v = np.asarray(b, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} contains NaN or Inf entries")
    return v


# ----------------------------
# SVD
# ----------------------------

@dataclass(frozen=True)
class SvdResult:
    u: Matrix       # rows x k, orthonormal columns
    sigma: np.ndarray  # k, nonincreasing, >= 0
    v: Matrix       # cols x k, orthonormal columns

    def reconstruct(self) -> Matrix:
        return (self.u * self.sigma) @ self.v.T

    def rank(self, rel_tol: float = RANK_REL_TOL) -> int:
        if self.sigma.size == 0 or self.sigma[0] == 0.0:
            return 0
        return int(np.count_nonzero(self.sigma > rel_tol * self.sigma[0]))


@lru_cache(maxsize=128)
def _round_robin(cols: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Tournament ordering: each round is a set of disjoint column pairs, every pair once per sweep."""
    players = list(range(cols)) + ([-1] if cols % 2 else [])
    k = len(players)
    rounds: list[tuple[np.ndarray, np.ndarray]] = []
    for _ in range(k - 1):
        pairs = [(players[i], players[k - 1 - i]) for i in range(k // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        p = np.array([a for a, _ in pairs], dtype=np.intp)
        q = np.array([b for _, b in pairs], dtype=np.intp)
        rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _null_floor(a: Matrix) -> float:
    # column norms at or below this are rounding noise; rotations preserve ||a||_F
    return a.shape[0] * float(np.finfo(np.float64).eps) * float(np.sqrt(np.einsum("ij,ij->", a, a)))


def _one_sided_jacobi(a: Matrix) -> tuple[Matrix, Matrix]:
    """
    Hestenes rotations on the columns of a (rows >= cols) until every column pair is
    orthogonal to JACOBI_TOL relative to the pair's norms. A pair holding a column of norm
    <= _null_floor(a) counts as orthogonal. Returns (A V, V).
    """
    work = a.copy()
    cols = work.shape[1]
    v = np.eye(cols)
    rounds = _round_robin(cols)
    norm_floor = _null_floor(a) ** 2

    for _ in range(MAX_SWEEPS):
        rotated = 0
        for p, q in rounds:
            ap = work[:, p]
            aq = work[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            mask = (
                (np.abs(gamma) > JACOBI_TOL * np.sqrt(alpha * beta))
                & (np.minimum(alpha, beta) > norm_floor)
            )
            if not mask.any():
                continue
            p, q = p[mask], q[mask]
            ap, aq = ap[:, mask], aq[:, mask]
            zeta = (beta[mask] - alpha[mask]) / (2.0 * gamma[mask])
            t = np.where(zeta >= 0.0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            work[:, p] = c * ap - s * aq
            work[:, q] = s * ap + c * aq
            vp = v[:, p]
            vq = v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
            rotated += int(mask.sum())
        if rotated == 0:
            return work, v

    raise ConvergenceError(f"Jacobi SVD did not converge within {MAX_SWEEPS} sweeps (shape {a.shape})")


def _orthonormal_complement(basis: Matrix, rows: int, count: int) -> Matrix:
    q, _ = np.linalg.qr(np.hstack([basis, np.eye(rows)]))
    k = basis.shape[1]
    return q[:, k:k + count]


def _fix_signs(u: Matrix, v: Matrix) -> tuple[Matrix, Matrix]:
    # largest-magnitude entry of every U column is made nonnegative
    if u.shape[1] == 0:
        return u, v
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[idx, np.arange(u.shape[1])] < 0.0, -1.0, 1.0)
    return u * signs, v * signs


def _jacobi_svd(a: Matrix) -> SvdResult:
    rows, cols = a.shape
    transposed = rows < cols
    if transposed:
        a = a.T
        rows, cols = cols, rows

    work, v = _one_sided_jacobi(a)
    sigma = np.sqrt(np.einsum("ij,ij->j", work, work))
    order = np.argsort(-sigma, kind="stable")
    sigma, work, v = sigma[order], work[:, order], v[:, order]

    cutoff = max(_null_floor(a), float(np.finfo(np.float64).tiny))
    nonzero = int(np.count_nonzero(sigma > cutoff))
    u = np.empty_like(work)
    u[:, :nonzero] = work[:, :nonzero] / sigma[:nonzero]
    if nonzero < cols:
        u[:, nonzero:] = _orthonormal_complement(u[:, :nonzero], rows, cols - nonzero)

    if transposed:
        u, v = v, u
    u, v = _fix_signs(u, v)
    return SvdResult(u=u, sigma=sigma, v=v)


def _lapack_svd(a: Matrix) -> SvdResult:
    u, sigma, vt = np.linalg.svd(a, full_matrices=False)
    u, v = _fix_signs(u, vt.T)
    return SvdResult(u=u, sigma=sigma, v=v)


def svd(x: object, method: SvdMethod = "jacobi") -> SvdResult:
    """
    Thin SVD x = U diag(sigma) V^T with k = min(rows, cols).

    method="jacobi" is the one-sided Jacobi reference; "lapack" delegates to numpy
    and applies the same sign convention.
    """
    a = as_matrix(x)
    if method == "jacobi":
        return _jacobi_svd(a)
    if method == "lapack":
        return _lapack_svd(a)
    raise DomainError(f"unknown SVD method {method!r}")


def matrix_rank(x: object, rel_tol: float = RANK_REL_TOL, method: SvdMethod = "jacobi") -> int:
    if not 0.0 < rel_tol < 1.0:
        raise DomainError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    return svd(x, method=method).rank(rel_tol)


def frobenius_norm(x: object) -> float:
    a = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def nuclear_norm(x: object, method: SvdMethod = "jacobi") -> float:
    return float(np.sum(svd(x, method=method).sigma))


def spectral_norm(x: object, method: SvdMethod = "jacobi") -> float:
    return float(svd(x, method=method).sigma[0])


def _pad_to_square(a: Matrix) -> Matrix:
    rows, cols = a.shape
    if rows >= cols:
        return a
    return np.vstack([a, np.zeros((cols - rows, cols))])


def null_space(a: object, rel_tol: float = 1e-10, method: SvdMethod = "jacobi") -> Matrix:
    """Orthonormal basis (cols x dim) of the null space of a; a may have zero rows."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"null_space expects a 2-D matrix, got shape {arr.shape}")
    cols = arr.shape[1]
    if arr.shape[0] == 0:
        return np.eye(cols)
    res = svd(_pad_to_square(as_matrix(arr, "a")), method=method)
    return res.v[:, res.rank(rel_tol):]


def smallest_right_singular(a: object, method: SvdMethod = "jacobi") -> tuple[float, np.ndarray]:
    """(sigma_min, v_min) over all cols directions; wide inputs are zero-padded so sigma_min may be 0."""
    res = svd(_pad_to_square(as_matrix(a, "a")), method=method)
    return float(res.sigma[-1]), res.v[:, -1]


# ----------------------------
# Least squares
# ----------------------------

def _check_triangular(r: Matrix, what: str) -> None:
    d = np.abs(np.diag(r))
    if d.size == 0:
        return
    if d.max() == 0.0 or d.min() <= QR_RANK_TOL * d.max():
        raise RankDeficientError(f"{what} is rank deficient (|R_ii| ratio {d.min() / max(d.max(), 1e-300):.3e})")


def least_squares(a: object, b: object) -> np.ndarray:
    """argmin ||a x - b||_2 through a reduced QR factorization; a needs full column rank."""
    mat = as_matrix(a, "a")
    rhs = as_vector(b, "b")
    if rhs.shape[0] != mat.shape[0]:
        raise DimensionError(f"b has length {rhs.shape[0]}, expected {mat.shape[0]}")
    if mat.shape[0] < mat.shape[1]:
        raise RankDeficientError(f"least squares with {mat.shape[0]} rows < {mat.shape[1]} unknowns")
    q, r = np.linalg.qr(mat)
    _check_triangular(r, "least-squares matrix")
    return solve_triangular(r, q.T @ rhs)


@dataclass(frozen=True)
class RowFactor:
    """a^T = Q R for a wide, full-row-rank a; applies the pseudo-inverse a^+ = Q R^{-T}."""
    q: Matrix
    r: Matrix

    def pinv_apply(self, z: np.ndarray) -> np.ndarray:
        return self.q @ solve_triangular(self.r, z, trans="T")


def factor_rows(a: object) -> RowFactor:
    mat = as_matrix(a, "a")
    if mat.shape[0] > mat.shape[1]:
        raise RankDeficientError(f"{mat.shape[0]} rows exceed {mat.shape[1]} columns; rows cannot be independent")
    q, r = np.linalg.qr(mat.T)
    _check_triangular(r, "row space")
    return RowFactor(q=q, r=r)


def min_norm_solve(a: object, b: object) -> np.ndarray:
    """Minimum-norm solution of a x = b for a wide, full-row-rank a."""
    rhs = as_vector(b, "b")
    return factor_rows(a).pinv_apply(rhs)


# ----------------------------
# Seeded randomness
# ----------------------------

SEED_MAX = 2**64


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < SEED_MAX:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator: identical seed, identical stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_check_seed(seed))))


def child_seed(seed: int, *index: int) -> int:
    """64-bit seed hashed from (seed, index...); distinct indices give unrelated streams."""
    ss = np.random.SeedSequence(entropy=_check_seed(seed), spawn_key=tuple(int(i) for i in index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def child_rng(seed: int, *index: int) -> np.random.Generator:
    return make_rng(child_seed(seed, *index))


def ensure_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(rng)


def gaussian_matrix(rows: int, cols: int, rng: RngLike) -> Matrix:
    """i.i.d. standard normal entries drawn from rng."""
    if rows < 0 or cols < 0:
        raise DimensionError(f"negative shape ({rows}, {cols})")
    return ensure_rng(rng).standard_normal((rows, cols))
