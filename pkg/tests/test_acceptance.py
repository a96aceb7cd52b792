"""Acceptance suite: one test per numbered criterion.

Each test runs the corresponding criterion end to end at full sample
size and fails with the criterion's own detail string, so `pytest -v`
gives one pass/fail line per criterion.  Set SINEBETA_ACCEPT_SCALE
(e.g. 0.05) to shrink the sample sizes for a smoke run; tolerances do
not scale.

The decay-slope criterion is expected to fail at any desk-scale budget:
its fit precondition needs on the order of 10^9 replicates at the outer
separations.  It runs faithfully and reports the shortfall rather than
substituting a weaker check.
"""

from sinebeta import validation


def _check(criterion):
    res = criterion()
    print(validation.format_report([res]))
    assert res.passed, f"criterion {res.index} ({res.name}): {res.detail}"
    return res


def test_criterion_01_intensity():
    _check(validation.criterion_intensity)


def test_criterion_02_beta2_oracle():
    _check(validation.criterion_beta2_oracle)


def test_criterion_03_beta2_decay_slope():
    _check(validation.criterion_beta2_decay)


def test_criterion_04_euler_order():
    _check(validation.criterion_euler_order)


def test_criterion_05_hellinger_quadrature():
    _check(validation.criterion_hellinger)


def test_criterion_06_spectral_regularization():
    _check(validation.criterion_spectral)


def test_criterion_07_mobius_roundtrip():
    _check(validation.criterion_mobius)


def test_criterion_08_property_suite():
    _check(validation.criterion_properties)


def test_criterion_09_coupling_decay():
    _check(validation.criterion_coupling_decay)


def test_criterion_10_determinism():
    _check(validation.criterion_determinism)
