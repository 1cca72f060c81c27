# theory.py
"""
Closed-form measurement thresholds for rank-r recovery of n x n matrices, plus the
numerical checks behind them: covering bound, small-ball estimate, and the
linear-subspace example showing that m >= d + 1 cannot be lowered.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from errors import DomainError
from linalg import RngLike, ensure_rng, svd, smallest_right_singular

KERNEL_REL_TOL = 1e-10
_SMALL_BALL_CHUNK = 10_000


@dataclass(frozen=True)
class ProblemDims:
    n: int
    r: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if not 1 <= self.r <= self.n:
            raise DomainError(f"r must satisfy 1 <= r <= n={self.n}, got {self.r}")

    @property
    def strong_ok(self) -> bool:
        """Strong recovery formulas need r <= n/2."""
        return 2 * self.r <= self.n


def strong_threshold(d: ProblemDims) -> int:
    """m >= 4nr - 4r^2 Gaussian measurements recover every rank-r matrix."""
    if not d.strong_ok:
        raise DomainError(f"strong recovery needs r <= n/2, got n={d.n}, r={d.r}")
    return 4 * d.n * d.r - 4 * d.r * d.r


def weak_threshold(d: ProblemDims) -> int:
    """m >= 2nr - r^2 + 1 Gaussian measurements recover one fixed rank-r matrix."""
    return 2 * d.n * d.r - d.r * d.r + 1


def manifold_dim(n: int, k: int) -> int:
    """Dimension of the manifold of n x n matrices of rank exactly k."""
    if not 0 <= k <= n:
        raise DomainError(f"rank k must satisfy 0 <= k <= n={n}, got {k}")
    return 2 * n * k - k * k


def unit_manifold_dim(n: int, k: int) -> int:
    """Rank-k matrices of unit Frobenius norm: one dimension less."""
    if k < 1:
        raise DomainError("no unit-norm matrix has rank 0")
    return manifold_dim(n, k) - 1


def general_manifold_threshold(d: int) -> int:
    """m >= d + 1 non-concentrating measurements miss a d-dimensional manifold (away from 0)."""
    if d < 0:
        raise DomainError(f"manifold dimension must be >= 0, got {d}")
    return d + 1


def nuclear_empirical_reference(d: ProblemDims) -> int:
    """Empirical weak-recovery point of nuclear-norm minimization with Gaussian measurements."""
    return 4 * d.n * d.r - 2 * d.r * d.r


def nuclear_lower_bound(d: ProblemDims) -> int:
    """Measurements nuclear-norm minimization needs to recover all rank-r matrices (subspace argument)."""
    return 2 * d.n * d.r


def sparse_thresholds(s: int) -> tuple[int, int]:
    """(strong, weak) measurement counts for s-sparse vectors: 2s and s + 1."""
    if s < 1:
        raise DomainError(f"sparsity must be >= 1, got {s}")
    return 2 * s, s + 1


@dataclass(frozen=True)
class ThresholdReport:
    n: int
    r: int
    strong: int | None
    weak: int
    manifold_r: int
    manifold_2r: int | None
    unit_manifold_2r: int | None
    nuclear_ref: int
    nuclear_lower: int

    @property
    def strong_hypothesis_ok(self) -> bool:
        return self.strong is not None


def threshold_report(d: ProblemDims) -> ThresholdReport:
    strong = strong_threshold(d) if d.strong_ok else None
    return ThresholdReport(
        n=d.n,
        r=d.r,
        strong=strong,
        weak=weak_threshold(d),
        manifold_r=manifold_dim(d.n, d.r),
        manifold_2r=manifold_dim(d.n, 2 * d.r) if d.strong_ok else None,
        unit_manifold_2r=unit_manifold_dim(d.n, 2 * d.r) if d.strong_ok else None,
        nuclear_ref=nuclear_empirical_reference(d),
        nuclear_lower=nuclear_lower_bound(d),
    )


def covering_bound(d: int, eps: float) -> float:
    """Upper bound (3/eps)^d on the eps-covering number of the unit Euclidean ball in R^d."""
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    return (3.0 / eps) ** d


# ----------------------------
# Small-ball hypothesis
# ----------------------------

def small_ball_reference(eps: float) -> float:
    """P(|g| < eps) for g standard normal: 2 Phi(eps) - 1."""
    return float(2.0 * norm.cdf(eps) - 1.0)


def small_ball_standard_error(eps: float, trials: int) -> float:
    p = small_ball_reference(eps)
    return math.sqrt(p * (1.0 - p) / trials)


def small_ball_estimate(
    n: int,
    eps: float,
    trials: int,
    rng: RngLike,
    x: np.ndarray | None = None,
) -> float:
    """
    Fraction of fresh Gaussian A with |<A, X>| < eps. X defaults to the normalized
    all-ones matrix; any X is rescaled to unit Frobenius norm.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if eps <= 0.0:
        raise DomainError(f"eps must be positive, got {eps}")
    if trials < 1000:
        raise DomainError(f"small-ball estimate needs at least 1000 trials, got {trials}")

    if x is None:
        x = np.ones((n, n))
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n, n):
        raise DomainError(f"X must be {n}x{n}, got shape {x.shape}")
    scale = float(np.linalg.norm(x))
    if scale == 0.0:
        raise DomainError("X must be nonzero")
    flat = x.reshape(-1) / scale

    gen = ensure_rng(rng)
    hits = 0
    done = 0
    while done < trials:
        batch = min(_SMALL_BALL_CHUNK, trials - done)
        inner = gen.standard_normal((batch, n * n)) @ flat
        hits += int(np.count_nonzero(np.abs(inner) < eps))
        done += batch
    return hits / trials


# ----------------------------
# Tightness of m >= d + 1
# ----------------------------

def subspace_counterexample(n: int, d: int, m: int, rng: RngLike) -> bool:
    """
    Draw a random (d+1)-dimensional subspace V of n x n matrices and m Gaussian
    functionals; True iff some nonzero element of V is annihilated by all of them.
    """
    if n < 1 or not 1 <= d + 1 <= n * n:
        raise DomainError(f"need 1 <= d+1 <= n^2, got n={n}, d={d}")
    if m < 0:
        raise DomainError(f"m must be >= 0, got {m}")

    gen = ensure_rng(rng)
    basis = gen.standard_normal((n * n, d + 1))
    if m == 0:
        return True
    functionals = gen.standard_normal((m, n * n))
    restricted = functionals @ basis

    top = svd(restricted).sigma[0]
    if top == 0.0:
        return True
    low, _ = smallest_right_singular(restricted)
    return bool(low < KERNEL_REL_TOL * top)
