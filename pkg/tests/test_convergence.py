"""
Tests for convergence statistics and verdicts.
"""
import numpy as np
import pytest

from RoughFlow.convergence import build_report, decide, loglog_slope


EPS = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])


def test_slope_of_power_law():
    assert loglog_slope(EPS, 3.0 * EPS**0.5) == pytest.approx(0.5)


def test_slope_undefined_cases():
    assert loglog_slope(EPS[:2], EPS[:2]) is None
    assert loglog_slope(EPS, np.zeros(4)) is None


@pytest.mark.parametrize(
    "final,slope,final_tol,slope_min,expected",
    [
        (1e-3, 0.5, 1e-2, 0.1, True),
        (1e-1, 0.5, 1e-2, 0.1, False),
        (1e-3, 0.05, 1e-2, 0.1, False),
        (1e-3, None, 1e-2, 0.1, True),
        (5.0, -1.0, None, None, True),
    ],
)
def test_decide(final, slope, final_tol, slope_min, expected):
    assert decide(final, slope, final_tol, slope_min) is expected


def test_report_statistics_and_pass():
    errors = np.vstack([EPS**0.5 * c for c in (0.5, 1.0, 1.5)])
    report = build_report("demo", errors, EPS, final_tol=0.2, slope_min=0.1)
    np.testing.assert_allclose(report.median, EPS**0.5)
    np.testing.assert_allclose(report.mean, EPS**0.5)
    assert report.slope == pytest.approx(0.5)
    assert report.samples == 3
    assert report.passed
    assert report.final == pytest.approx(0.125)


def test_report_is_order_independent():
    rng = np.random.default_rng(1)
    errors = rng.random((20, 4))
    a = build_report("x", errors, EPS)
    b = build_report("x", errors[rng.permutation(20)], EPS)
    assert a.median == b.median
    assert a.q10 == b.q10
    assert a.q90 == b.q90


def test_fault_fails_decay_check():
    flat = np.ones((5, 4)) * 0.01
    report = build_report("flat", flat * np.linspace(1.0, 1.01, 4), EPS, final_tol=1.0, slope_min=0.1)
    assert not report.passed


def test_non_finite_rows_are_excluded():
    errors = np.full((10, 4), 1e-3)
    errors[3, 2] = np.nan
    report = build_report("nan", errors, EPS, final_tol=1e-2)
    assert report.samples == 9
    assert report.excluded == 1
    # 1 of 10 paths is beyond the 1% allowance
    assert not report.passed


def test_exact_zero_errors_pass_without_slope():
    report = build_report("exact", np.zeros((4, 4)), EPS, final_tol=1e-12, slope_min=0.1)
    assert report.slope is None
    assert report.passed


def test_mean_statistic():
    errors = np.zeros((10, 4))
    errors[0] = 1.0
    report = build_report("share", errors, EPS, final_tol=0.15, statistic="mean")
    assert report.final == pytest.approx(0.1)
    assert report.passed


def test_column_mismatch():
    with pytest.raises(ValueError, match="error columns"):
        build_report("bad", np.zeros((3, 2)), EPS)


def test_diagnostic_report_keeps_its_own_verdict():
    report = build_report("share", np.ones((4, 4)), EPS, final_tol=0.1, statistic="mean", gating=False)
    assert not report.passed
    assert report.gating is False
    assert build_report("gate", np.ones((4, 4)), EPS).gating is True


def test_decay_fault_fails_over_whole_schedule():
    # errors that never shrink, although every level sits below the final tolerance
    rng = np.random.default_rng(3)
    flat = 0.02 * (1.0 + 0.1 * rng.random((30, len(EPS))))
    report = build_report("flat", flat, EPS, final_tol=0.05, slope_min=0.1)
    assert report.final < 0.05
    assert report.slope == pytest.approx(0.0, abs=0.05)
    assert not report.passed
    decaying = build_report("decay", flat * EPS / EPS[0], EPS, final_tol=0.05, slope_min=0.1)
    assert decaying.passed
