import math

import numpy as np
import pytest

from privamp.audit import (
    AuditReport,
    audit_amplification_mc,
    audit_density_ratio,
    audit_unbiasedness,
    laplace_log_ratio,
    run_suite,
)
from privamp.sampling import make_full, make_uniform


def test_report_invariant():
    assert AuditReport.judge("a", 1.0, 1.0, 0.0, 1).passed
    assert not AuditReport.judge("a", 1.1, 1.0, 0.05, 1).passed
    control = AuditReport.judge("c", 2.0, 1.0, 0.0, 1, expect_pass=False)
    assert control.ok and not control.passed


class TestDensityRatio:
    def test_zero_shift(self):
        rep = audit_density_ratio(1.0, 1.0, np.zeros(2))
        assert rep.observed == 0.0 and rep.bound == 0.0 and rep.passed

    def test_bound_is_attained(self):
        rep = audit_density_ratio(1.0, 2.0, np.array([0.5]))
        assert rep.passed
        assert rep.observed == pytest.approx(1.0, abs=1e-12)

    def test_mixed_signs_attained(self):
        rep = audit_density_ratio(0.7, 3.0, np.array([0.4, -0.2, 0.1]))
        assert rep.passed
        assert rep.observed == pytest.approx(rep.bound, rel=1e-12)

    def test_negative_control_fails(self):
        rep = audit_density_ratio(1.0, 2.0, np.array([0.5]), shift_multiplier=2.0)
        assert not rep.passed and rep.ok

    def test_grid_minimum(self):
        with pytest.raises(ValueError):
            audit_density_ratio(1.0, 1.0, np.ones(1), grid=50)

    def test_log_ratio_antisymmetric(self):
        y = np.random.default_rng(0).normal(size=(10, 2))
        a, b = np.array([0.1, 0.2]), np.array([-0.3, 0.0])
        np.testing.assert_allclose(laplace_log_ratio(y, a, b, 1.5), -laplace_log_ratio(y, b, a, 1.5))


class TestAmplification:
    def test_no_sampling(self):
        rep = audit_amplification_mc(1.0, 1.3)
        assert rep.observed == pytest.approx(1.3, abs=1e-12)

    def test_half(self):
        rep = audit_amplification_mc(0.5, 1.0)
        assert abs(rep.observed - math.log(1 + 0.5 * (math.e - 1))) <= 1e-12

    def test_vanishing_rate(self):
        assert audit_amplification_mc(1e-9, 2.0).observed < 1e-8
        assert audit_amplification_mc(0.0, 2.0).observed == 0.0

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            audit_amplification_mc(1.5, 1.0)


class TestUnbiasedness:
    def test_full_exact(self):
        X = np.random.default_rng(0).normal(size=(20, 2))
        rep = audit_unbiasedness(make_full(20), X, lambda Y: (Y**2).sum(axis=1), trials=10_000)
        assert rep.observed <= 1e-9 and rep.passed

    def test_uniform_half(self):
        X = np.zeros((100, 1))
        rep = audit_unbiasedness(make_uniform(100, 50), X, lambda Y: np.ones(len(Y)), trials=100_000)
        assert rep.passed
        # Horvitz-Thompson standard deviation sqrt(sum (1/q - 1)) = 10
        assert rep.bound == pytest.approx(3 * 10 / math.sqrt(100_000), rel=0.02)

    def test_minimum_trials(self):
        with pytest.raises(ValueError):
            audit_unbiasedness(make_full(3), np.zeros((3, 1)), lambda Y: np.ones(3), trials=100)


def test_quick_suite_all_as_expected():
    reports = run_suite(seed=0, quick=True)
    assert all(r.ok for r in reports), [r for r in reports if not r.ok]
    assert any(not r.expect_pass for r in reports)
    assert any(r.name.startswith("unbiasedness(optimal") for r in reports)
