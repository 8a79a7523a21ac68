import io

import numpy as np

from app.services import selftest_service
from app.services.selftest_service import (
    FD_TOLERANCE,
    SuiteResult,
    cmd_selftest,
    convergence_suite,
    finite_difference_suite,
    format_table,
    run_suites,
)


def test_selftest_passes():
    out = io.StringIO()
    assert cmd_selftest(out) == 0
    table = out.getvalue()
    assert "FALLA" not in table
    assert table.count("OK") == len(selftest_service.SUITES)


def test_finite_difference_suite_is_below_tolerance():
    result = finite_difference_suite(cases=50, seed=9)
    assert result.cases == 50
    assert result.max_deviation < FD_TOLERANCE


def test_convergence_suite_reports_final_theta():
    result = convergence_suite()
    assert result.passed
    assert result.cases == 300
    assert "θ final" in result.detail


def test_suite_exception_is_reported_as_failure():
    def broken():
        raise RuntimeError("explota")

    [result] = run_suites([broken])
    assert not result.passed
    assert "RuntimeError" in result.detail


def test_failed_suite_exits_with_one(monkeypatch):
    monkeypatch.setattr(selftest_service, "SUITES", [lambda: SuiteResult("mala", 1, 1.0, 0.5)])
    out = io.StringIO()
    assert cmd_selftest(out) == 1
    assert "FALLA" in out.getvalue()


def test_non_finite_deviation_never_passes():
    assert not SuiteResult("nan", 1, float("nan"), 1.0).passed
    assert not SuiteResult("inf", 1, np.inf, 1.0).passed


def test_format_table_has_one_line_per_suite():
    results = [SuiteResult("a", 10, 1e-13, 1e-12), SuiteResult("b", 5, 0.2, 0.05, detail="x")]
    lines = format_table(results).splitlines()
    assert len(lines) == 4
    assert lines[2].endswith("OK")
    assert lines[3].endswith("(x)")
