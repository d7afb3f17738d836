import csv
import math
import re

import pytest

from gaussi import parse, validate
from gaussi.casestudy import (CaseStudyConfig, DatasetError, dp_parameters, generate_program,
                              groups, load_dataset, run_case_study, statistics_for_case,
                              true_average)
from gaussi.metrics import gaussian_mechanism_variance
from gaussi.oracle import oracle_posterior

ALL = [(c, dp) for c in (1, 2, 3) for dp in (False, True)]


@pytest.fixture(scope="module")
def people():
    return load_dataset()


@pytest.fixture(scope="module")
def results():
    return {(c, dp): run_case_study(CaseStudyConfig(case=c, dp=dp)) for c, dp in ALL}


def test_dataset_shape(people):
    # the table holds 8 gender/age groups of 10 people
    assert len(people) == 80
    g = groups(people)
    assert len(g) == 8 and all(len(v) == 5 * 2 for v in g.values())
    victim = g[("male", "21-30")][0]
    assert (victim.income, victim.prior_mean, victim.prior_variance) == (500000, 480000, 100)


def test_observations_are_true_averages(people):
    stats = statistics_for_case(3, people)
    assert true_average(stats[0], people) == 472000
    for s in stats:
        g = groups(people)
        incomes = [p.income for m in s.members for p in g[m]]
        assert true_average(s, people) == sum(incomes) / len(incomes)
    assert [len(s.members) for s in stats] == [1, 2, 4]


def test_case1_posterior(results):
    r = results[(1, False)]
    assert abs(r.posterior_mean - 483000) <= 1e-9 * 483000
    assert abs(r.posterior_variance - 90) <= 1e-9
    _, m, c = oracle_posterior(parse(r.program))
    assert abs(m[0] - 483000) <= 1e-9 * 483000 and abs(c[0, 0] - 90) <= 1e-9


def test_case1_dp_noise_literal_and_tiny_shift(results):
    r = results[(1, True)]
    (var,) = r.noise_variances.values()
    assert abs(var - 1442533240) <= 1
    assert re.search(r"Normal\(0, 1442533240\.\d+\)", r.program)
    assert abs(r.posterior_mean - r.prior_mean) < 1


def test_dp_defaults_reconstruct_listing_parameters(people):
    stat = statistics_for_case(1, people)[0]
    p = dp_parameters(stat, people, CaseStudyConfig(dp=True))
    assert (p.sensitivity, p.delta, p.epsilon) == (11000, 0.01, 0.9)


def test_dp_scope_and_overrides(people):
    stat = statistics_for_case(1, people)[0]
    p = dp_parameters(stat, people, CaseStudyConfig(dp=True, dp_scope="database"))
    incomes = [x.income for x in people]
    assert p.sensitivity == (max(incomes) - min(incomes)) / 80 and p.delta == 1 / 6400
    p = dp_parameters(stat, people, CaseStudyConfig(dp=True, sensitivity=5, delta=0.2, epsilon=2))
    assert (p.sensitivity, p.delta, p.epsilon) == (5, 0.2, 2)
    assert gaussian_mechanism_variance(p) == pytest.approx(2 * 25 * math.log(6.25) / 4)


@pytest.mark.parametrize("case,dp", ALL)
def test_generated_programs_validate(case, dp):
    text, obs, noises = generate_program(CaseStudyConfig(case=case, dp=dp))
    assert validate(parse(text)) == []
    assert len(obs) == case and len(noises) == (case if dp else 0)


def test_later_releases_add_no_information_without_noise(results):
    # once the males-21-30 average is observed exactly, the other averages only
    # reveal sums over people independent of the victim
    base = results[(1, False)]
    for case in (2, 3):
        r = results[(case, False)]
        assert r.posterior_mean == pytest.approx(base.posterior_mean, rel=1e-12)
        assert r.posterior_variance == pytest.approx(base.posterior_variance, rel=1e-9)


def test_mi_decreases_from_case1_to_case3(results):
    for dp in (False, True):
        mi = [results[(c, dp)].leakage.mutual_information for c in (1, 2, 3)]
        assert mi[0] > mi[1] > mi[2] > 0


def test_case1_mi_closed_form(results):
    assert results[(1, False)].leakage.mutual_information == pytest.approx(0.5 * math.log2(10 / 9), rel=1e-12)


def test_kl_increases_with_dp(results):
    kl = [results[(c, True)].leakage.kl_prior_posterior for c in (1, 2, 3)]
    assert kl[0] < kl[1] < kl[2]


def test_dp_metrics_below_non_dp(results):
    for c in (1, 2, 3):
        a, b = results[(c, True)].leakage, results[(c, False)].leakage
        assert a.kl_prior_posterior < b.kl_prior_posterior
        assert a.kl_prior_posterior_nats < b.kl_prior_posterior_nats
        assert a.mutual_information < b.mutual_information


def test_noise_lowers_mi_for_every_release(results):
    for c in (1, 2, 3):
        plain, noisy = results[(c, False)].mi_by_statistic, results[(c, True)].mi_by_statistic
        for name, v in plain.items():
            assert noisy[f"{name}_dp"] < v


def test_victim_override(people):
    r = run_case_study(CaseStudyConfig(case=1, victim="male_21_30[3]"))
    assert r.victim == "male_21_30_3" and r.prior_mean == groups(people)[("male", "21-30")][3].prior_mean
    with pytest.raises(ValueError):
        run_case_study(CaseStudyConfig(victim="nobody[0]"))


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        CaseStudyConfig(case=4)
    with pytest.raises(ValueError):
        CaseStudyConfig(dp_scope="world")
    with pytest.raises(ValueError):
        CaseStudyConfig(dataset=tmp_path / "missing.csv")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def test_dataset_schema_violations(tmp_path):
    bad = tmp_path / "bad.csv"
    write_rows(bad, ["age_group", "gender", "income"], [["21-30", "male", 1]])
    with pytest.raises(DatasetError, match="missing columns"):
        load_dataset(bad)
    write_rows(bad, ["age_group", "gender", "income", "prior_mean", "prior_variance"],
               [["21-30", "robot", 1, 1, 1]])
    with pytest.raises(DatasetError, match="gender"):
        load_dataset(bad)
    write_rows(bad, ["age_group", "gender", "income", "prior_mean", "prior_variance"],
               [["21-30", "male", "lots", 1, 1]])
    with pytest.raises(DatasetError, match="income"):
        load_dataset(bad)
    write_rows(bad, ["age_group", "gender", "income", "prior_mean", "prior_variance"],
               [["21-30", "male", 1, 1, 0]])
    with pytest.raises(DatasetError, match="variance"):
        load_dataset(bad)


def test_separate_prior_table(tmp_path, people):
    priors = tmp_path / "priors.csv"
    write_rows(priors, ["age_group", "gender", "prior_mean", "prior_variance"],
               [[p.age_group, p.gender, p.prior_mean + 1000, 400] for p in people])
    merged = load_dataset(None, priors)
    assert merged[0].prior_mean == 481000 and merged[0].prior_variance == 400
    assert [p.income for p in merged] == [p.income for p in people]
    write_rows(priors, ["age_group", "gender", "prior_mean", "prior_variance"], [["21-30", "male", 1, 1]])
    with pytest.raises(DatasetError):
        load_dataset(None, priors)
