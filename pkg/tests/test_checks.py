import pytest

from monoflow.checks import SUITE_NAMES, SUITES, run_suites


class TestSuiteRegistry:
    def test_expected_names(self):
        assert SUITE_NAMES == ["FEEDBACK", "FLOW", "HPE", "TENSOR", "METRICS"]
        assert set(SUITES) == set(SUITE_NAMES)

    def test_unknown_suite_rejected(self):
        with pytest.raises(KeyError):
            run_suites(["NOPE"])


class TestRunSuites:
    def test_deterministic_given_seed(self):
        a = run_suites(["FEEDBACK"], seed=0)["FEEDBACK"]
        b = run_suites(["FEEDBACK"], seed=0)["FEEDBACK"]
        assert a.all_passed and b.all_passed
        assert [e.margin for e in a.outcomes] == [e.margin for e in b.outcomes]

    def test_parallel_matches_serial(self):
        names = ["FEEDBACK", "METRICS"]
        ser = run_suites(names, seed=0, max_workers=1)
        par = run_suites(names, seed=0, max_workers=2)
        for n in names:
            assert [e.margin for e in ser[n].outcomes] == [e.margin for e in par[n].outcomes]

    def test_report_lines_carry_margins(self):
        rep = run_suites(["METRICS"], seed=0)["METRICS"]
        lines = rep.lines()
        assert lines
        assert all(line.startswith("[PASS]") for line in lines)
        assert any("margin" in line for line in lines)
