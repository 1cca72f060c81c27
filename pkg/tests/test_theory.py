import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from errors import DomainError
from theory import (
    ProblemDims,
    covering_bound,
    general_manifold_threshold,
    manifold_dim,
    nuclear_empirical_reference,
    nuclear_lower_bound,
    small_ball_estimate,
    small_ball_reference,
    small_ball_standard_error,
    sparse_thresholds,
    strong_threshold,
    subspace_counterexample,
    threshold_report,
    unit_manifold_dim,
    weak_threshold,
)


@st.composite
def strong_dims(draw):
    n = draw(st.integers(min_value=2, max_value=60))
    r = draw(st.integers(min_value=1, max_value=n // 2))
    return ProblemDims(n, r)


@st.composite
def any_dims(draw):
    n = draw(st.integers(min_value=1, max_value=60))
    r = draw(st.integers(min_value=1, max_value=n))
    return ProblemDims(n, r)


def test_threshold_values():
    assert strong_threshold(ProblemDims(10, 1)) == 36
    assert strong_threshold(ProblemDims(8, 1)) == 28
    assert weak_threshold(ProblemDims(8, 1)) == 16
    assert weak_threshold(ProblemDims(10, 2)) == 37
    assert manifold_dim(10, 2) == 36
    assert manifold_dim(10, 4) == 64
    assert manifold_dim(10, 0) == 0
    assert unit_manifold_dim(10, 2) == 35
    assert unit_manifold_dim(4, 4) == 15
    assert nuclear_empirical_reference(ProblemDims(10, 1)) == 38
    assert nuclear_lower_bound(ProblemDims(10, 1)) == 20
    assert covering_bound(2, 0.5) == 36
    assert covering_bound(1, 0.5) == 6


@pytest.mark.parametrize("n", [2, 4, 6, 10])
def test_strong_threshold_at_half_rank_is_ambient(n):
    assert strong_threshold(ProblemDims(n, n // 2)) == n * n


@pytest.mark.parametrize("n", [1, 3, 7])
def test_weak_threshold_at_full_rank(n):
    assert weak_threshold(ProblemDims(n, n)) == n * n + 1


def test_strong_threshold_needs_half_rank():
    with pytest.raises(DomainError):
        strong_threshold(ProblemDims(4, 3))


@pytest.mark.parametrize("n, r", [(0, 1), (3, 0), (3, 4)])
def test_problem_dims_validation(n, r):
    with pytest.raises(DomainError):
        ProblemDims(n, r)


@given(strong_dims())
def test_strong_threshold_is_manifold_dimension(d):
    assert strong_threshold(d) == manifold_dim(d.n, 2 * d.r)
    assert strong_threshold(d) == general_manifold_threshold(unit_manifold_dim(d.n, 2 * d.r))


@given(any_dims())
def test_weak_threshold_is_manifold_dimension_plus_one(d):
    assert weak_threshold(d) == manifold_dim(d.n, d.r) + 1
    assert weak_threshold(d) == general_manifold_threshold(manifold_dim(d.n, d.r))


@given(n=st.integers(min_value=1, max_value=40), data=st.data())
def test_unit_manifold_is_codimension_one(n, data):
    k = data.draw(st.integers(min_value=1, max_value=n))
    assert unit_manifold_dim(n, k) == manifold_dim(n, k) - 1


def test_manifold_dim_domain():
    with pytest.raises(DomainError):
        manifold_dim(3, 4)
    with pytest.raises(DomainError):
        unit_manifold_dim(3, 0)
    with pytest.raises(DomainError):
        general_manifold_threshold(-1)


def test_sparse_thresholds():
    assert sparse_thresholds(5) == (10, 6)
    with pytest.raises(DomainError):
        sparse_thresholds(0)


def test_threshold_report():
    report = threshold_report(ProblemDims(10, 1))
    assert (report.strong, report.weak, report.nuclear_ref) == (36, 20, 38)
    assert report.manifold_r == 19
    assert report.unit_manifold_2r == 35
    assert report.strong_hypothesis_ok

    wide = threshold_report(ProblemDims(5, 3))
    assert wide.strong is None
    assert wide.manifold_2r is None
    assert not wide.strong_hypothesis_ok
    assert wide.weak == 2 * 5 * 3 - 9 + 1


@given(d=st.integers(min_value=1, max_value=20), eps=st.floats(min_value=0.01, max_value=0.98))
def test_covering_bound_decreases_in_eps(d, eps):
    assert covering_bound(d, eps) > covering_bound(d, eps + 0.01)


@pytest.mark.parametrize("d, eps", [(0, 0.5), (2, 0.0), (2, 1.0)])
def test_covering_bound_domain(d, eps):
    with pytest.raises(DomainError):
        covering_bound(d, eps)


# ----------------------------
# Small-ball estimate
# ----------------------------

@pytest.mark.parametrize("eps, expected, tol", [(0.1, 0.0797, 0.003), (1.0, 0.6827, 0.005)])
def test_small_ball_estimate(eps, expected, tol):
    assert small_ball_reference(eps) == pytest.approx(expected, abs=1e-4)
    estimate = small_ball_estimate(8, eps, 100_000, 42)
    assert abs(estimate - expected) <= tol


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2, 0.5])
def test_small_ball_linear_bound(eps):
    assert small_ball_estimate(8, eps, 100_000, 7) / eps <= 0.9


def test_small_ball_is_rotation_invariant():
    x = np.diag(np.arange(1.0, 5.0))
    estimate = small_ball_estimate(4, 0.5, 100_000, 3, x=x)
    assert abs(estimate - small_ball_reference(0.5)) <= 5 * small_ball_standard_error(0.5, 100_000)


def test_small_ball_domain():
    with pytest.raises(DomainError):
        small_ball_estimate(4, 0.1, 999, 0)
    with pytest.raises(DomainError):
        small_ball_estimate(4, 0.0, 10_000, 0)
    with pytest.raises(DomainError):
        small_ball_estimate(4, 0.1, 10_000, 0, x=np.zeros((4, 4)))


# ----------------------------
# Subspace counterexample
# ----------------------------

@given(n=st.integers(min_value=1, max_value=4), seed=st.integers(min_value=0, max_value=2**32 - 1), data=st.data())
def test_counterexample_forced_when_m_at_most_d(n, seed, data):
    d = data.draw(st.integers(min_value=0, max_value=n * n - 1))
    m = data.draw(st.integers(min_value=0, max_value=d))
    assert subspace_counterexample(n, d, m, seed)


def test_counterexample_trivial_line():
    assert subspace_counterexample(3, 0, 0, 1)


@pytest.mark.parametrize("seed", range(100))
def test_counterexample_dimension_count(seed):
    assert subspace_counterexample(4, 5, 5, seed)
    assert not subspace_counterexample(4, 5, 6, seed)


def test_counterexample_domain():
    with pytest.raises(DomainError):
        subspace_counterexample(2, 4, 1, 0)
    with pytest.raises(DomainError):
        subspace_counterexample(2, 1, -1, 0)
