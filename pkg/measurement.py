# measurement.py
"""
Linear measurement operators A: R^{n x n} -> R^m, (A(X))_i = <A_i, X>, their adjoint,
the Gaussian ensemble and the Frobenius projection onto {X : A(X) = y}.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from errors import DimensionError, DomainError, OperatorFileError, RankDeficientError
from linalg import RngLike, RowFactor, ensure_rng, factor_rows, null_space, svd

logger = logging.getLogger(__name__)

FULL_ROW_RANK_TOL = 1e-10
MAGIC = b"ULAB0001"


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    n: int
    sensing: np.ndarray                  # (m, n, n), read-only
    seed: int | None = None              # set when sampled from an integer seed
    gram_factor: RowFactor | None = None  # QR of the flattened sensing matrix (transposed)

    @property
    def m(self) -> int:
        return int(self.sensing.shape[0])

    @property
    def flat(self) -> np.ndarray:
        """m x n^2 row matrix; row i is vec(A_i)."""
        return self.sensing.reshape(self.m, self.n * self.n)

    @classmethod
    def from_sensing(cls, sensing: object, seed: int | None = None) -> MeasurementOperator:
        arr = np.array(sensing, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2] or arr.shape[1] < 1:
            raise DimensionError(f"sensing must have shape (m, n, n), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("sensing matrices contain NaN or Inf entries")
        n = int(arr.shape[1])
        m = int(arr.shape[0])
        if m > n * n:
            raise DomainError(f"m={m} exceeds n^2={n * n}; the rows cannot be independent")
        arr.setflags(write=False)

        factor = None
        if m >= 1:
            flat = arr.reshape(m, n * n)
            try:
                factor = factor_rows(flat)
                sigma = svd(factor.r).sigma
                if sigma[-1] <= FULL_ROW_RANK_TOL * sigma[0]:
                    raise RankDeficientError(f"sigma_min/sigma_max = {sigma[-1] / sigma[0]:.3e}")
            except RankDeficientError as e:
                logger.debug("operator n=%d m=%d has no full row rank: %s", n, m, e)
                factor = None
        return cls(n=n, sensing=arr, seed=seed, gram_factor=factor)

    @property
    def full_row_rank(self) -> bool:
        return self.m == 0 or self.gram_factor is not None


def sample_gaussian_operator(n: int, m: int, rng: RngLike) -> MeasurementOperator:
    """m sensing matrices with i.i.d. N(0, 1) entries (no 1/sqrt(m) scaling)."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not 0 <= m <= n * n:
        raise DomainError(f"need 0 <= m <= n^2={n * n}, got m={m}")
    seed = None if isinstance(rng, np.random.Generator) else int(rng)
    sensing = ensure_rng(rng).standard_normal((m, n, n))
    op = MeasurementOperator.from_sensing(sensing, seed=seed)
    if not op.full_row_rank:
        raise RankDeficientError(f"Gaussian operator n={n} m={m} is numerically rank deficient; resample")
    return op


def coordinate_operator(n: int, indices: Sequence[tuple[int, int]]) -> MeasurementOperator:
    """Sensing by indicator matrices E_jk: measurement i reads entry indices[i] of X."""
    sensing = np.zeros((len(indices), n, n))
    for i, (j, k) in enumerate(indices):
        sensing[i, j, k] = 1.0
    return MeasurementOperator.from_sensing(sensing)


def _check_x(op: MeasurementOperator, x: object) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != (op.n, op.n):
        raise DimensionError(f"X must be {op.n}x{op.n}, got shape {arr.shape}")
    return arr


def _check_y(op: MeasurementOperator, y: object) -> np.ndarray:
    vec = np.asarray(y, dtype=np.float64).reshape(-1)
    if vec.shape[0] != op.m:
        raise DimensionError(f"measurement vector has length {vec.shape[0]}, operator has m={op.m}")
    return vec


def apply(op: MeasurementOperator, x: object) -> np.ndarray:
    """values_i = trace(A_i^T X)."""
    return op.flat @ _check_x(op, x).reshape(-1)


def adjoint(op: MeasurementOperator, y: object) -> np.ndarray:
    """sum_i y_i A_i."""
    return (_check_y(op, y) @ op.flat).reshape(op.n, op.n)


def project_affine(op: MeasurementOperator, x: object, y: object) -> np.ndarray:
    """Frobenius-nearest X' to x with A(X') = y."""
    arr = _check_x(op, x)
    vec = _check_y(op, y)
    if op.m == 0:
        return arr.copy()
    if op.gram_factor is None:
        raise RankDeficientError(f"operator n={op.n} m={op.m} is rank deficient; cannot project")
    residual = op.flat @ arr.reshape(-1) - vec
    return arr - op.gram_factor.pinv_apply(residual).reshape(op.n, op.n)


def flattened(op: MeasurementOperator) -> np.ndarray:
    return op.flat


def nullspace_basis(op: MeasurementOperator) -> np.ndarray:
    """Orthonormal basis (n^2 x dim) of the null space of the flattened operator."""
    return null_space(np.zeros((0, op.n * op.n)) if op.m == 0 else op.flat)


# ----------------------------
# Binary persistence
# ----------------------------

def save_operator(op: MeasurementOperator, path: str | Path) -> None:
    """
    ULAB0001 | n:i64 | m:i64 | seed:u64 | has_body:i64 | body (m*n*n float64), all little-endian.
    Seeded operators are stored header-only and resampled on load.
    """
    has_body = op.seed is None
    header = np.array([op.n, op.m], dtype="<i8").tobytes()
    header += np.array([op.seed or 0], dtype="<u8").tobytes()
    header += np.array([1 if has_body else 0], dtype="<i8").tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(header)
        if has_body:
            f.write(np.ascontiguousarray(op.sensing, dtype="<f8").tobytes())


def load_operator(path: str | Path) -> MeasurementOperator:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != MAGIC:
        raise OperatorFileError(f"{path}: bad magic {raw[:8]!r}, expected {MAGIC!r}")
    if len(raw) < 40:
        raise OperatorFileError(f"{path}: truncated header ({len(raw)} bytes)")
    n, m = (int(v) for v in np.frombuffer(raw, dtype="<i8", count=2, offset=8))
    seed = int(np.frombuffer(raw, dtype="<u8", count=1, offset=24)[0])
    has_body = int(np.frombuffer(raw, dtype="<i8", count=1, offset=32)[0])

    if not has_body:
        return sample_gaussian_operator(n, m, seed)

    expected = m * n * n * 8
    if len(raw) - 40 != expected:
        raise OperatorFileError(f"{path}: body has {len(raw) - 40} bytes, expected {expected}")
    sensing = np.frombuffer(raw, dtype="<f8", offset=40).reshape(m, n, n)
    return MeasurementOperator.from_sensing(sensing)
