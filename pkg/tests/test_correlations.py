"""Tests for the correlation estimators.

The Poisson sampler gives exact independence, so every truncated estimator
has a known null expectation there; the carousel sampler is exercised for
consistency rather than statistical power (the heavy comparisons live in the
acceptance suite).
"""

import math

import numpy as np
import pytest

from sinebeta.sde import BetaParams, TWO_PI
from sinebeta import carousel
from sinebeta.correlations import (
    CarouselCountSampler,
    CorrelationEstimate,
    IntervalCluster,
    MomentAccumulator,
    PoissonCountSampler,
    default_r_grid,
    fit_decay_exponent,
    fully_truncated,
    partially_truncated,
    product_moment,
    seed_stream,
    unit_cluster_pair,
)


def test_seed_stream():
    s = seed_stream(0b1100, 0, 4)
    assert s.dtype == np.uint64
    assert list(s) == [0b1100, 0b1101, 0b1110, 0b1111]
    # consecutive blocks are disjoint
    a = set(seed_stream(99, 0, 100).tolist())
    b = set(seed_stream(99, 100, 100).tolist())
    assert not a & b


def test_default_r_grid():
    np.testing.assert_allclose(default_r_grid(),
                               [4 * math.pi, 8 * math.pi,
                                16 * math.pi, 32 * math.pi])


def test_interval_cluster_validation():
    with pytest.raises(ValueError):
        IntervalCluster((), "left")
    with pytest.raises(ValueError):
        IntervalCluster(((0.0, 1.0),), "middle")
    with pytest.raises(ValueError):
        IntervalCluster(((0.5, 1.0),), "left")  # wrong half-line
    with pytest.raises(ValueError):
        IntervalCluster(((-1.0, 1.0),), "right")
    with pytest.raises(ValueError):
        IntervalCluster(((0.0, 0.0),), "right")  # empty interval
    with pytest.raises(ValueError):
        IntervalCluster(((0.0, 100.0),), "right")  # above the length cap
    with pytest.raises(ValueError):
        IntervalCluster(((0.0, 2.0), (1.0, 1.0)), "right")  # overlap


def test_interval_cluster_spans():
    c = IntervalCluster(((0.0, 1.0), (2.0, 0.5)), "right")
    assert c.k == 2
    assert c.spans() == [(0.0, 1.0), (2.0, 2.5)]
    assert c.spans(shift=10.0) == [(10.0, 11.0), (12.0, 12.5)]
    left, right = unit_cluster_pair()
    assert left.spans() == [(-1.0, 0.0)]
    assert right.spans(shift=3.0) == [(3.0, 4.0)]


def test_moment_accumulator_merge_exact():
    rng = np.random.default_rng(1)
    a = rng.normal(size=501)
    b = rng.normal(size=733)
    c = rng.normal(size=89)
    whole = MomentAccumulator.from_values(np.concatenate([a, b, c]))
    merged = (MomentAccumulator.from_values(a)
              .merge(MomentAccumulator.from_values(b))
              .merge(MomentAccumulator.from_values(c)))
    assert merged.n == whole.n
    assert merged.mean == pytest.approx(whole.mean, abs=1e-12)
    assert merged.m2 == pytest.approx(whole.m2, rel=1e-12)
    # associativity
    other = (MomentAccumulator.from_values(a)
             .merge(MomentAccumulator.from_values(b)
                    .merge(MomentAccumulator.from_values(c))))
    assert other.mean == pytest.approx(merged.mean, abs=1e-12)
    assert other.m2 == pytest.approx(merged.m2, rel=1e-12)


def test_correlation_estimate_merge_rules():
    a = MomentAccumulator.from_values(np.arange(10.0))
    est = CorrelationEstimate(value=a.mean, std_err=a.std_err(), n_samples=10,
                              estimator_tag="product_moment", acc=a)
    other = CorrelationEstimate(value=0.0, std_err=1.0, n_samples=5,
                                estimator_tag="partially_truncated")
    with pytest.raises(ValueError):
        est.merge(other)
    bare = CorrelationEstimate(value=0.0, std_err=1.0, n_samples=5,
                               estimator_tag="product_moment")
    with pytest.raises(ValueError):
        est.merge(bare)
    merged = est.merge(est)
    assert merged.n_samples == 20
    assert merged.value == pytest.approx(a.mean)


def test_poisson_sampler_mean_and_determinism():
    ps = PoissonCountSampler()
    spans = [(-1.0, 0.0), (5.0, 7.0)]
    seeds = seed_stream(7, 0, 4000)
    counts, unfrozen = ps.interval_counts(spans, seeds)
    assert unfrozen == 0.0
    again, _ = ps.interval_counts(spans, seeds)
    assert np.array_equal(counts, again)
    for j, ln in enumerate((1.0, 2.0)):
        m = counts[:, j].mean()
        se = counts[:, j].std() / math.sqrt(len(seeds))
        assert abs(m - ln / TWO_PI) < 4 * se


def test_carousel_sampler_counts_are_edge_differences():
    p = BetaParams(2.0)
    sampler = CarouselCountSampler(p)
    spans = [(-1.0, 0.0), (0.0, TWO_PI)]
    seeds = np.arange(10)
    counts, _ = sampler.interval_counts(spans, seeds)
    raw, _ = carousel.count_batch(p, np.array([-1.0, 0.0, TWO_PI]), seeds)
    assert np.array_equal(counts[:, 0], raw[:, 1] - raw[:, 0])
    assert np.array_equal(counts[:, 1], raw[:, 2] - raw[:, 1])


def test_product_moment_poisson_independence():
    left, right = unit_cluster_pair()
    res = product_moment(PoissonCountSampler(), left, right, 10.0, 20000, 3)
    for est in (res.mean_left, res.mean_right):
        assert abs(est.value - 1.0 / TWO_PI) < 4 * est.std_err
    prod = res.mean_left.value * res.mean_right.value
    err = math.hypot(res.joint.std_err,
                     2 * res.mean_left.std_err / TWO_PI)
    assert abs(res.joint.value - prod) < 4 * err
    assert res.joint.estimator_tag == "product_moment"
    assert not res.joint.quality_warning


def test_product_moment_rejects_negative_r():
    left, right = unit_cluster_pair()
    with pytest.raises(ValueError):
        product_moment(PoissonCountSampler(), left, right, -1.0, 100, 0)
    with pytest.raises(ValueError):
        product_moment(PoissonCountSampler(), left, right, 1.0, 2, 0)


def test_partially_truncated_poisson_null():
    left, right = unit_cluster_pair()
    est = partially_truncated(PoissonCountSampler(), left, right, 8.0,
                              40000, 17)
    assert abs(est.value) < 4 * est.std_err
    assert est.estimator_tag == "partially_truncated"
    assert est.n_samples == 40000
    assert est.std_err > 0


def test_fully_truncated_k2_delegates_to_split_estimator():
    left, right = unit_cluster_pair()
    spans = left.spans() + right.spans(shift=6.0)
    a = fully_truncated(PoissonCountSampler(), spans, 8000, 5)
    b = partially_truncated(PoissonCountSampler(), left, right, 6.0, 8000, 5)
    assert a.value == b.value
    assert a.std_err == b.std_err
    assert a.estimator_tag == "fully_truncated"


def test_fully_truncated_k3_poisson_null():
    spans = [(-1.0, 0.0), (4.0, 5.0), (9.0, 10.0)]
    est = fully_truncated(PoissonCountSampler(), spans, 30000, 23)
    assert abs(est.value) < 4 * est.std_err + 1e-4
    assert est.estimator_tag == "fully_truncated"


def test_fully_truncated_range_checks():
    with pytest.raises(ValueError):
        fully_truncated(PoissonCountSampler(), [(-1.0, 0.0)], 100, 0)
    spans = [(float(j), float(j) + 0.5) for j in range(9)]
    with pytest.raises(ValueError):
        fully_truncated(PoissonCountSampler(), spans, 100, 0)


def test_carousel_product_moment_intensity():
    # one-interval product moments reduce to mean counts: compare the
    # left/right window means against the known density 1/2pi
    p = BetaParams(2.0)
    left, right = unit_cluster_pair()
    res = product_moment(p, left, right, 4 * math.pi, 2000, 29)
    for est in (res.mean_left, res.mean_right):
        assert abs(est.value - 1.0 / TWO_PI) < 5 * est.std_err
    assert not res.joint.quality_warning


def test_fit_decay_exponent_exact_power_law():
    pts = []
    for r in (2.0, 4.0, 8.0, 16.0):
        v = 3.0 * r ** -2.0
        pts.append((r, CorrelationEstimate(value=v, std_err=v * 1e-4,
                                           n_samples=10,
                                           estimator_tag="t")))
    fit = fit_decay_exponent(pts)
    assert fit.slope == pytest.approx(-2.0, abs=1e-10)
    assert not fit.oscillation
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-8)
    assert fit.slope_err < 1e-3


def test_fit_decay_exponent_oscillation_flag():
    pts = []
    for j, r in enumerate((2.0, 4.0, 8.0)):
        v = (-1.0) ** j * r ** -1.0
        pts.append((r, CorrelationEstimate(value=v, std_err=abs(v) * 0.01,
                                           n_samples=10, estimator_tag="t")))
    fit = fit_decay_exponent(pts)
    assert fit.oscillation
    assert fit.slope == pytest.approx(-1.0, abs=1e-6)


def test_fit_decay_exponent_preconditions():
    good = CorrelationEstimate(value=1.0, std_err=0.01, n_samples=10,
                               estimator_tag="t")
    with pytest.raises(ValueError):
        fit_decay_exponent([(1.0, good), (2.0, good)])
    noisy = CorrelationEstimate(value=0.01, std_err=0.5, n_samples=10,
                                estimator_tag="t")
    with pytest.raises(ValueError, match="relative precision"):
        fit_decay_exponent([(1.0, good), (2.0, good), (4.0, noisy)])
    zero = CorrelationEstimate(value=0.0, std_err=0.01, n_samples=10,
                               estimator_tag="t")
    with pytest.raises(ValueError):
        fit_decay_exponent([(1.0, good), (2.0, good), (4.0, zero)])
