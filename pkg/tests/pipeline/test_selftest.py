from unittest.mock import patch

import pytest

from langdepth.pipeline import selftest
from langdepth.pipeline.selftest import (
    check_alignment,
    check_metrics,
    check_schedule_identities,
    run_selftest,
)


def test_schedule_identities_hold():
    passed, detail = check_schedule_identities()
    assert passed, detail


def test_alignment_suite_passes():
    passed, detail = check_alignment(instances=5)
    assert passed, detail
    assert "L1 gap" in detail


def test_metrics_suite_passes():
    passed, detail = check_metrics(maps=20)
    assert passed, detail
    assert detail.startswith("0 definition mismatches over 20 maps")


def test_run_selftest_reports_each_suite():
    fake = {
        "good": lambda: (True, "fine"),
        "bad": lambda: (False, "broken"),
    }
    with patch.dict(selftest.SUITES, fake, clear=True):
        results = run_selftest()
        only_bad = run_selftest(["bad"])
    assert [(r.name, r.passed, r.detail) for r in results] == [
        ("good", True, "fine"),
        ("bad", False, "broken"),
    ]
    assert all(r.seconds >= 0 for r in results)
    assert [r.name for r in only_bad] == ["bad"]


def test_unknown_suite_raises():
    with pytest.raises(KeyError):
        run_selftest(["nope"])
