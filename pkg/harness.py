# harness.py
"""
Seeded Monte Carlo experiments: single recovery / unicity trials, (n, r, m) grid sweeps,
phase-transition crossing estimates and CSV persistence of the results.
"""
from __future__ import annotations

import hashlib
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Literal, NamedTuple, Sequence

import numpy as np

from errors import CsvFormatError, DomainError, UlabError
from jobs import CellState, JobStore, Listener
from linalg import RngLike, child_rng, child_seed, ensure_rng
from measurement import apply, sample_gaussian_operator
from solvers import (
    SUCCESS_REL_ERROR,
    SolverParams,
    UnicityVerdict,
    nuclear_min,
    nullspace_rank_search,
    rank_minimize,
)
from theory import ProblemDims, threshold_report
from utils_csv import iter_csv_rows, write_csv_rows

logger = logging.getLogger(__name__)

Method = Literal["rank_min", "nuclear_min", "unicity_search"]
METHODS: tuple[str, ...] = ("rank_min", "nuclear_min", "unicity_search")

TRIALS_HEADER = ["method", "n", "r", "m", "trial", "seed", "success", "rel_error", "residual", "wall_time_s"]
SUMMARY_HEADER = ["method", "n", "r", "m", "trials", "successes", "rate"]
CROSSINGS_HEADER = ["method", "n", "r", "m_star", "weak_threshold", "strong_threshold", "nuclear_empirical_ref"]

# child-seed slots inside one trial
_SLOT_MATRIX = 0
_SLOT_OPERATOR = 1
_SLOT_SOLVER = 2


# ----------------------------
# Seeds
# ----------------------------

def cell_hash(n: int, r: int, m: int) -> int:
    """Stable (process-independent) 64-bit hash of a grid cell."""
    digest = hashlib.blake2b(f"{n}:{r}:{m}".encode("ascii"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def trial_seed(master_seed: int, n: int, r: int, m: int, trial_index: int) -> int:
    # the method is not part of the key: every method sees the same M and operator
    return child_seed(master_seed, cell_hash(n, r, m), trial_index)


# ----------------------------
# Single trial
# ----------------------------

@dataclass(frozen=True)
class TrialSpec:
    n: int
    r: int
    m: int
    method: Method
    master_seed: int
    trial_index: int
    solver: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 1 <= self.r <= self.n:
            raise DomainError(f"need 1 <= r <= n, got n={self.n}, r={self.r}")
        if not 0 <= self.m <= self.n * self.n:
            raise DomainError(f"need 0 <= m <= n^2={self.n * self.n}, got m={self.m}")
        if self.trial_index < 0:
            raise DomainError(f"trial_index must be >= 0, got {self.trial_index}")

    @property
    def seed(self) -> int:
        return trial_seed(self.master_seed, self.n, self.r, self.m, self.trial_index)


@dataclass(frozen=True)
class TrialOutcome:
    method: str
    n: int
    r: int
    m: int
    trial: int
    seed: int
    success: bool
    rel_error: float
    residual: float
    wall_time: float = field(default=0.0, compare=False)
    note: str = field(default="", compare=False)

    @property
    def key(self) -> tuple[str, int, int, int, int]:
        return (self.method, self.n, self.r, self.m, self.trial)


def random_low_rank(n: int, r: int, rng: RngLike) -> np.ndarray:
    """U V^T with i.i.d. Gaussian n x r factors, scaled to unit Frobenius norm."""
    gen = ensure_rng(rng)
    u = gen.standard_normal((n, r))
    v = gen.standard_normal((n, r))
    x = u @ v.T
    return x / float(np.linalg.norm(x))


def _unicity_rank(spec: TrialSpec) -> int:
    return min(2 * spec.r, spec.n)


def run_trial(spec: TrialSpec) -> TrialOutcome:
    """
    Recovery methods: draw M and a Gaussian operator, solve from y = A(M) and score
    ||x_hat - M||_F <= 1e-4. unicity_search: draw only the operator and succeed when the
    rank-2r null-space search reports NOT FOUND. Solver errors become failed outcomes.
    """
    seed = spec.seed
    solver = replace(spec.solver, seed=child_seed(seed, _SLOT_SOLVER))
    started = time.perf_counter()
    note = ""
    try:
        op = sample_gaussian_operator(spec.n, spec.m, child_seed(seed, _SLOT_OPERATOR))
        if spec.method == "unicity_search":
            search = nullspace_rank_search(op, _unicity_rank(spec), solver)
            verdict = search.verdict
            success = verdict is UnicityVerdict.NOT_FOUND
            rel_error = residual = float(search.objective)
            note = verdict.value
        else:
            truth = random_low_rank(spec.n, spec.r, child_rng(seed, _SLOT_MATRIX))
            y = apply(op, truth)
            if spec.method == "rank_min":
                result = rank_minimize(op, y, spec.r, solver)
            else:
                result = nuclear_min(op, y, solver)
            rel_error = float(np.linalg.norm(result.x_hat - truth))
            residual = float(result.residual)
            success = rel_error <= SUCCESS_REL_ERROR
            if not result.converged:
                note = f"not converged after {result.iterations} iterations"
    except (UlabError, np.linalg.LinAlgError) as e:
        logger.warning("trial %s n=%d r=%d m=%d #%d failed: %s", spec.method, spec.n, spec.r, spec.m, spec.trial_index, e)
        success = False
        rel_error = residual = math.inf
        note = f"{type(e).__name__}: {e}"

    return TrialOutcome(
        method=spec.method,
        n=spec.n,
        r=spec.r,
        m=spec.m,
        trial=spec.trial_index,
        seed=seed,
        success=success,
        rel_error=rel_error,
        residual=residual,
        wall_time=time.perf_counter() - started,
        note=note,
    )


# ----------------------------
# Phase table
# ----------------------------

class CellCount(NamedTuple):
    trials: int
    successes: int

    @property
    def rate(self) -> float:
        return self.successes / self.trials


CellKey = tuple[int, int, int, str]    # (n, r, m, method)
CurveKey = tuple[int, int, str]        # (n, r, method)


def _outcome_order(o: TrialOutcome) -> tuple[int, int, int, str, int]:
    return (o.n, o.r, o.m, o.method, o.trial)


@dataclass(frozen=True)
class PhaseTable:
    """Per-trial outcomes, held sorted so that equality ignores execution and file order."""

    outcomes: tuple[TrialOutcome, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "outcomes", tuple(sorted(self.outcomes, key=_outcome_order)))

    @cached_property
    def cells(self) -> dict[CellKey, CellCount]:
        counts: dict[CellKey, list[int]] = {}
        for o in self.outcomes:
            c = counts.setdefault((o.n, o.r, o.m, o.method), [0, 0])
            c[0] += 1
            c[1] += int(o.success)
        return {k: CellCount(t, s) for k, (t, s) in counts.items()}

    def curve(self, n: int, r: int, method: str) -> list[tuple[int, float]]:
        """(m, success rate) for one (n, r, method), sorted by m."""
        return sorted(
            (m, count.rate)
            for (cn, cr, m, cm), count in self.cells.items()
            if (cn, cr, cm) == (n, r, method)
        )

    @cached_property
    def curves(self) -> list[CurveKey]:
        return sorted({(n, r, method) for (n, r, _, method) in self.cells})

    @cached_property
    def crossings(self) -> dict[CurveKey, float]:
        found: dict[CurveKey, float] = {}
        for key in self.curves:
            m_star = estimate_crossing(self.curve(*key))
            if m_star is not None:
                found[key] = m_star
        return found


def estimate_crossing(rates: Sequence[tuple[float, float]]) -> float | None:
    """
    First pair with rate_i < 0.5 <= rate_{i+1}, linearly interpolated; None when the
    success rate never crosses 0.5 from below. A curve starting at exactly 0.5 crosses
    at its first m.
    """
    ms = [float(m) for m, _ in rates]
    if any(b < a for a, b in zip(ms, ms[1:])):
        raise DomainError("rates must be sorted by m")
    if rates and rates[0][1] == 0.5:
        return ms[0]
    for (m0, p0), (m1, p1) in zip(rates, rates[1:]):
        if p0 < 0.5 <= p1:
            return float(m0) + (0.5 - p0) / (p1 - p0) * (float(m1) - float(m0))
    return None


# ----------------------------
# Sweep
# ----------------------------

def _grid_specs(
    n_list: Sequence[int],
    r_list: Sequence[int],
    m_range: Iterable[int],
    methods: Sequence[str],
    trials_per_cell: int,
    master_seed: int,
    solver: SolverParams,
) -> list[TrialSpec]:
    ms = list(m_range)
    specs: list[TrialSpec] = []
    for n in n_list:
        for r in r_list:
            if not 1 <= r <= n:
                logger.warning("skipping r=%d for n=%d (need 1 <= r <= n)", r, n)
                continue
            for m in ms:
                if not 0 <= m <= n * n:
                    logger.warning("skipping m=%d for n=%d (need 0 <= m <= n^2)", m, n)
                    continue
                for method in methods:
                    specs.extend(
                        TrialSpec(n, r, m, method, master_seed, t, solver) for t in range(trials_per_cell)
                    )
    return specs


def phase_sweep(
    n_list: Sequence[int],
    r_list: Sequence[int],
    m_range: Iterable[int],
    methods: Sequence[str],
    trials_per_cell: int,
    master_seed: int,
    workers: int = 1,
    solver: SolverParams | None = None,
    progress: JobStore | None = None,
    listener: Listener | None = None,
    record_timing: bool = True,
) -> PhaseTable:
    """
    Runs every (n, r, m, method) cell trials_per_cell times. Results are keyed by
    (cell, trial), so the table is identical for any worker count. `listener` receives
    the progress events of the job created in `progress`.
    """
    if not n_list or not r_list or not methods:
        raise DomainError("n_list, r_list and methods must be nonempty")
    if trials_per_cell < 1:
        raise DomainError(f"trials_per_cell must be >= 1, got {trials_per_cell}")
    if workers < 1:
        raise DomainError(f"workers must be >= 1, got {workers}")
    bad = [mt for mt in methods if mt not in METHODS]
    if bad:
        raise DomainError(f"unknown methods {bad}; expected a subset of {METHODS}")
    ms = list(m_range)
    if not ms:
        raise DomainError("m_range must be nonempty")

    specs = _grid_specs(n_list, r_list, ms, methods, trials_per_cell, master_seed, solver or SolverParams())

    job_id = None
    if progress is not None:
        job_id = progress.create_job({
            "n": list(n_list), "r": list(r_list), "m": ms, "methods": list(methods),
            "trials_per_cell": trials_per_cell, "seed": master_seed, "workers": workers,
        })
        seen: set[tuple[str, int, int, int]] = set()
        for s in specs:
            if (s.method, s.n, s.r, s.m) not in seen:
                seen.add((s.method, s.n, s.r, s.m))
                progress.add_cell(job_id, CellState(s.method, s.n, s.r, s.m, trials=trials_per_cell))
        if listener is not None:
            progress.subscribe(job_id, listener)
        progress.set_status(job_id, "running")

    results: dict[tuple[str, int, int, int, int], TrialOutcome] = {}

    def _collect(outcome: TrialOutcome) -> None:
        if not record_timing:
            outcome = replace(outcome, wall_time=0.0)
        results[outcome.key] = outcome
        if progress is not None:
            progress.record_trial(job_id, outcome.method, outcome.n, outcome.r, outcome.m, outcome.success)

    logger.info("phase sweep: %d trials on %d worker(s)", len(specs), workers)
    try:
        if workers == 1 or len(specs) <= 1:
            for s in specs:
                _collect(run_trial(s))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_trial, s) for s in specs]
                for fut in as_completed(futures):
                    _collect(fut.result())
    except BaseException:
        if progress is not None:
            progress.set_status(job_id, "error")
        raise

    if progress is not None:
        progress.set_status(job_id, "done")
    return PhaseTable(tuple(results.values()))


# ----------------------------
# CSV persistence
# ----------------------------

def _fmt(x: float) -> str:
    # repr round-trips doubles exactly
    return repr(float(x))


def write_csv(table: PhaseTable, path: str) -> None:
    rows = [
        {
            "method": o.method,
            "n": o.n,
            "r": o.r,
            "m": o.m,
            "trial": o.trial,
            "seed": o.seed,
            "success": 1 if o.success else 0,
            "rel_error": _fmt(o.rel_error),
            "residual": _fmt(o.residual),
            "wall_time_s": _fmt(o.wall_time),
        }
        for o in table.outcomes
    ]
    write_csv_rows(path, rows, TRIALS_HEADER)


def _parse_outcome(row: dict[str, str]) -> TrialOutcome:
    method = row["method"]
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    success = row["success"]
    if success not in ("0", "1"):
        raise ValueError(f"success must be 0 or 1, got {success!r}")
    outcome = TrialOutcome(
        method=method,
        n=int(row["n"]),
        r=int(row["r"]),
        m=int(row["m"]),
        trial=int(row["trial"]),
        seed=int(row["seed"]),
        success=success == "1",
        rel_error=float(row["rel_error"]),
        residual=float(row["residual"]),
        wall_time=float(row["wall_time_s"]),
    )
    if outcome.n < 1 or not 1 <= outcome.r <= outcome.n or not 0 <= outcome.m <= outcome.n ** 2:
        raise ValueError(f"invalid dimensions n={outcome.n} r={outcome.r} m={outcome.m}")
    if outcome.trial < 0 or outcome.seed < 0:
        raise ValueError("trial and seed must be nonnegative")
    return outcome


def read_csv(path: str) -> PhaseTable:
    outcomes: dict[tuple[str, int, int, int, int], TrialOutcome] = {}
    for line, row in iter_csv_rows(path, TRIALS_HEADER):
        try:
            outcome = _parse_outcome(row)
        except ValueError as e:
            raise CsvFormatError(path, line, str(e)) from None
        if outcome.key in outcomes:
            raise CsvFormatError(path, line, f"duplicate trial {outcome.key}")
        outcomes[outcome.key] = outcome
    return PhaseTable(tuple(outcomes.values()))


def write_summary_csv(table: PhaseTable, path: str) -> None:
    rows = [
        {
            "method": method,
            "n": n,
            "r": r,
            "m": m,
            "trials": count.trials,
            "successes": count.successes,
            "rate": _fmt(count.rate),
        }
        for (n, r, m, method), count in sorted(table.cells.items())
    ]
    write_csv_rows(path, rows, SUMMARY_HEADER)


def write_crossings_csv(table: PhaseTable, path: str) -> None:
    """Only (n, r, method) curves whose success rate brackets 0.5 get a row."""
    rows = []
    for (n, r, method), m_star in sorted(table.crossings.items()):
        report = threshold_report(ProblemDims(n, r))
        rows.append({
            "method": method,
            "n": n,
            "r": r,
            "m_star": _fmt(m_star),
            "weak_threshold": report.weak,
            "strong_threshold": "" if report.strong is None else report.strong,
            "nuclear_empirical_ref": report.nuclear_ref,
        })
    write_csv_rows(path, rows, CROSSINGS_HEADER)
