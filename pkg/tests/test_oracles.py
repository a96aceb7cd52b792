"""Tests for the determinantal reference formulas and closed bounds."""

import math

import numpy as np
import pytest

from sinebeta.oracles import (
    TWO_PI,
    discrepancy_beta2,
    forrester_haldane_leading,
    overcrowding_bound,
    rho2_truncated_beta2,
    rho2_truncated_beta2_integrated,
    rho_k_beta2,
    sine_kernel,
)


def test_sine_kernel_values():
    assert sine_kernel(3.0, 3.0) == pytest.approx(1.0 / TWO_PI, rel=1e-15)
    assert sine_kernel(math.pi, 0.0) == pytest.approx(1.0 / math.pi ** 2,
                                                      rel=1e-12)
    assert abs(sine_kernel(TWO_PI, 0.0)) < 1e-16
    # symmetric and translation invariant
    assert sine_kernel(1.3, 0.4) == pytest.approx(sine_kernel(0.4, 1.3))
    assert sine_kernel(1.3, 0.4) == pytest.approx(sine_kernel(0.9, 0.0))


def test_rho_k_values_and_identities():
    assert rho_k_beta2([5.0]) == pytest.approx(1.0 / TWO_PI, rel=1e-15)
    r = 2.31
    direct = rho_k_beta2([0.0, r])
    expected = 1.0 / (4 * math.pi ** 2) - sine_kernel(r, 0.0) ** 2
    assert direct == pytest.approx(expected, rel=1e-12)
    # truncated two-point = rho_2 - rho_1^2
    assert rho2_truncated_beta2(r) == pytest.approx(
        direct - rho_k_beta2([0.0]) ** 2, abs=1e-15)
    # repulsion: coincident points have zero correlation
    assert abs(rho_k_beta2([1.0, 1.0])) < 1e-18


def test_rho_k_rejects_bad_input():
    with pytest.raises(ValueError):
        rho_k_beta2([])
    with pytest.raises(ValueError):
        rho_k_beta2(np.zeros(11))
    with pytest.raises(ValueError):
        rho_k_beta2(np.zeros((2, 2)))


def test_truncated_formula():
    for r in (0.5, math.pi, 10.0):
        assert rho2_truncated_beta2(r) == pytest.approx(
            -math.sin(r / 2.0) ** 2 / (math.pi * r) ** 2, rel=1e-13)
    # even in r
    assert rho2_truncated_beta2(-3.7) == rho2_truncated_beta2(3.7)


def _midpoint_window_integral(w1, w2, n):
    a1, b1 = w1
    a2, b2 = w2
    u = a1 + (b1 - a1) * (np.arange(n) + 0.5) / n
    v = a2 + (b2 - a2) * (np.arange(n) + 0.5) / n
    g = rho2_truncated_beta2(u[:, None] - v[None, :])
    return g.sum() * (b1 - a1) * (b2 - a2) / n ** 2


def test_integrated_truncated_vs_midpoint():
    w1, w2 = (-1.0, 0.0), (2.0, 3.5)
    val = rho2_truncated_beta2_integrated(w1, w2)
    # midpoint refinement: compare at two resolutions to confirm convergence
    coarse = _midpoint_window_integral(w1, w2, 400)
    fine = _midpoint_window_integral(w1, w2, 800)
    assert abs(fine - coarse) < 1e-8
    assert val == pytest.approx(fine, abs=1e-8)


def test_integrated_truncated_validation():
    with pytest.raises(ValueError):
        rho2_truncated_beta2_integrated((0.0, 1.0), (0.5, 2.0))
    with pytest.raises(ValueError):
        rho2_truncated_beta2_integrated((1.0, 1.0), (2.0, 3.0))
    # touching windows are disjoint up to a null set and must be accepted
    rho2_truncated_beta2_integrated((0.0, 1.0), (1.0, 2.0))


def test_discrepancy_structure():
    mean = 3.0 / TWO_PI
    var = discrepancy_beta2(3.0)
    assert 0.0 < var < mean  # negative correlations at beta = 2
    assert discrepancy_beta2(6.0) > var  # growing, if only logarithmically
    with pytest.raises(ValueError):
        discrepancy_beta2(0.0)


def test_discrepancy_small_window_expansion():
    # Var = L/2pi - L^2/(4 pi^2) + O(L^4) for small L
    L = 1e-3
    expect = L / TWO_PI - L * L / (4 * math.pi ** 2)
    assert discrepancy_beta2(L) == pytest.approx(expect, rel=1e-6)


def test_forrester_haldane_beta2():
    lead = forrester_haldane_leading(2.0, math.pi)
    # the two equivalent displays of the same leading term
    assert lead.value == pytest.approx(-1.0 / math.pi ** 4, rel=1e-13)
    assert lead.value == pytest.approx(
        (-1.0 + math.cos(math.pi)) / (2 * math.pi ** 2 * math.pi ** 2))
    assert lead.oscillatory and lead.amplitude_known
    assert lead.envelope_exponent == 2.0


def test_forrester_haldane_low_beta():
    lead = forrester_haldane_leading(1.0, 10.0)
    assert lead.value == pytest.approx(-1.0 / (100.0 * math.pi ** 2))
    assert not lead.oscillatory
    assert lead.amplitude_known


def test_forrester_haldane_high_beta():
    lead = forrester_haldane_leading(8.0, 5.0)
    assert lead.value is None
    assert not lead.amplitude_known
    assert lead.envelope_exponent == pytest.approx(0.5)
    assert lead.envelope() == pytest.approx(5.0 ** -0.5)
    with pytest.raises(ValueError):
        forrester_haldane_leading(0.0, 1.0)
    with pytest.raises(ValueError):
        forrester_haldane_leading(2.0, 0.0)


def test_overcrowding_bound_values():
    b = overcrowding_bound(2.0, 1.0, 4)
    assert b.value == pytest.approx(math.exp(-8.0 * math.log(4.0)), rel=1e-13)
    assert b.applicable and b.lambda_in_range
    # below the mean the bound is vacuous and flagged as such
    vac = overcrowding_bound(2.0, 5.0, 3)
    assert not vac.applicable
    assert vac.value == 1.0
    small = overcrowding_bound(2.0, 0.5, 2)
    assert not small.lambda_in_range
    with pytest.raises(ValueError):
        overcrowding_bound(2.0, 1.0, 0)


def test_overcrowding_bound_monotone_in_n():
    vals = [overcrowding_bound(2.0, 1.0, n).value for n in range(2, 9)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert all(0.0 < v <= 1.0 for v in vals)


def test_truncated_matches_determinant_form_random_r():
    rng = np.random.default_rng(17)
    for r in rng.uniform(0.05, 60.0, size=1000):
        det_form = rho_k_beta2([0.0, r]) - rho_k_beta2([0.0]) ** 2
        assert abs(det_form - rho2_truncated_beta2(r)) < 1e-12
