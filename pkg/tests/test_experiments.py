import pytest

from floodings import experiments, generators


@pytest.mark.parametrize("suite", ["circle", "segment", "star", "star2", "grid"])
def test_suite_gates_pass(suite):
    reports = experiments.run_suite(suite, fast=True)
    assert reports
    for rep in reports:
        assert rep.passed, rep.text()


def test_star_m1_expected_geometry():
    even = experiments.star_m1_expected(1, 1, 1)
    assert even["offset"] == 0.0
    long = experiments.star_m1_expected(4, 1, 1)
    # the center is reached after time r1 - r2 - r3 at rate 1/2
    assert long["offset"] == pytest.approx(1.0) and long["times"][0] == pytest.approx(2.0)
    assert long["rates"][1] == pytest.approx([0.25, 0.25, 0.5])


def test_report_lines_and_csv():
    rep = experiments.run_convergence(generators.segment(), n_list=(2, 4), trials=20, name="tiny")
    assert [c.name for c in rep.checks][:3] == ["median_beta_nondecreasing", "frac_within_eps_nondecreasing",
                                                "median_dist_nonincreasing"]
    assert rep.csv.splitlines()[0] == "n,median_beta,beta_star,frac_within_eps,median_dist"
    assert len(rep.csv.splitlines()) == 3
    for line in rep.lines():
        assert line.split()[-1] in ("pass", "FAIL")
    assert rep.runtime > 0


def test_runs_are_deterministic():
    a = experiments.run_convergence(generators.star(1, 1, 1), n_list=(2,), trials=30, seed=4)
    b = experiments.run_convergence(generators.star(1, 1, 1), n_list=(2,), trials=30, seed=4)
    assert a.csv == b.csv


def test_grid_diagnostic_is_informational():
    rep = experiments.run_grid_diagnostic()
    assert all(not c.gating for c in rep.checks)
    assert any("window" in note for note in rep.notes)


def test_unknown_suite():
    with pytest.raises(KeyError):
        experiments.run_suite("nope")
