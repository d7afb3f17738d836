import collections
import math

import numpy as np
import pytest

from gaussi import SupportError, parse, run_program, unparse, validate
from gaussi.oracle import (AbcFailure, NoiseBasisModel, STATEMENT_KINDS, abc_posterior,
                           build_noise_basis, oracle_moments, oracle_posterior, random_program)

EXAMPLE1 = "X1 = Normal(50, 2)\nX2 = Normal(2 * X1 - 5, 1)\nX3 = Normal(1 * X2 - 10, 4)\nreturn X1, X2, X3"
EXAMPLE3 = "X = Normal(15,2); Y = Normal(20,1); Z = Normal(2X,1)\nreturn X, Y, Z"
EXAMPLE6 = "X = Normal(15,2); Y = Normal(2,1); Z = X + Y\ncondition(Z, 1)\nreturn X, Y"
FEASIBLE = "X = Normal(15,2); Y = Normal(2,1); Z = X + Y\ncondition(Z, 16)\nreturn X, Y"


def test_example3_covariance_from_weights():
    m = build_noise_basis(parse(EXAMPLE3))
    assert float(m.weights("X") @ m.weights("Z")) == pytest.approx(4)


def test_single_variable_representation():
    m = build_noise_basis(parse("X = Normal(7, 9)\nreturn X"))
    assert m.basis_count == 1
    assert m.offset("X") == 7 and m.weights("X").tolist() == [3.0]


def test_example1_indirect_covariance():
    mean, cov = oracle_moments(build_noise_basis(parse(EXAMPLE1)), ["X1", "X2", "X3"])
    assert cov[0, 2] == pytest.approx(4)
    np.testing.assert_allclose(mean, [50, 95, 85])


def test_example6_via_projection():
    names, mean, cov = oracle_posterior(parse(EXAMPLE6))
    np.testing.assert_allclose(mean, [13 / 3, -10 / 3], atol=1e-12)
    np.testing.assert_allclose(cov, [[2 / 3, -2 / 3], [-2 / 3, 2 / 3]], atol=1e-12)


def test_disjoint_bases_are_uncorrelated():
    m = NoiseBasisModel()
    m.add_independent("A", 0, 2)
    m.add_independent("B", 1, 3)
    assert m.moments(["A", "B"])[1][0, 1] == 0


def test_oracle_support_violation():
    m = NoiseBasisModel()
    m.add_independent("A", 0, 1)
    m.add_shift_scale("Z", "A", "*", 0)
    with pytest.raises(SupportError):
        m.condition("Z", 1.0)


def test_unknown_target():
    with pytest.raises(ValueError):
        oracle_moments(build_noise_basis(parse(EXAMPLE3)), ["Q"])


def test_oracle_covariance_is_a_gram_matrix():
    for seed in range(30):
        _, _, cov = oracle_posterior(random_program(seed))
        assert np.linalg.eigvalsh(cov).min() >= -1e-9 * (1 + np.abs(cov).max())


# -- generator ------------------------------------------------------------

def test_random_program_deterministic():
    assert random_program(123) == random_program(123)
    assert unparse(random_program(123)) == unparse(random_program(123))
    assert random_program(1) != random_program(2)


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("GAUSSI_SEED", "77")
    assert random_program() == random_program(77)


def test_generated_programs_are_valid_and_bounded():
    for seed in range(300):
        p = random_program(seed, max_vars=12, max_conditions=3)
        assert validate(p) == []
        model = build_noise_basis(p, skip_conditions=True)
        assert len(model.variables) <= 12
        conds = [line for line in unparse(p).splitlines() if line.startswith("condition")]
        assert len(conds) <= 3


def test_generated_programs_cover_every_statement_form():
    counts = collections.Counter()
    for seed in range(1000):
        _, kinds = random_program(seed, return_kinds=True)
        counts.update(kinds)
    assert set(STATEMENT_KINDS) <= set(counts)
    assert min(counts[k] for k in STATEMENT_KINDS) >= 50


def test_generated_constants_in_range():
    for seed in range(100):
        text = unparse(random_program(seed))
        for line in text.splitlines():
            if "Normal(" in line:
                var = float(line.rsplit(",", 1)[1].strip(" )"))
                assert 0.1 <= var <= 10


# -- ABC ------------------------------------------------------------------

def test_abc_example6_literal_observation_is_infeasible():
    # Z = 1 lies more than nine standard deviations below the prior mean 17
    with pytest.raises(AbcFailure, match="bandwidth"):
        abc_posterior(parse(EXAMPLE6), 1_000_000, 0.05, seed=0)


def test_abc_feasible_variant_within_three_standard_errors():
    p = parse(FEASIBLE)
    est = abc_posterior(p, 1_000_000, 0.05, seed=1)
    exact = run_program(p)
    assert est.accepted > 1000
    assert np.all(np.abs(est.mean - exact.mean) <= 3 * est.stderr)


def test_abc_condition_at_prior_mean_of_independent():
    p = parse("X = Normal(3, 2)\nO = Normal(10, 1)\ncondition(O, 10)\nreturn X")
    est = abc_posterior(p, 200_000, 0.05, seed=2)
    assert abs(est.mean[0] - 3) <= 3 * est.stderr[0]
    assert est.cov[0, 0] == pytest.approx(2, rel=0.1)


def test_abc_without_conditions_is_plain_monte_carlo():
    p = parse("X = Normal(3, 2)\nY = Normal(2 * X + 1, 1)\nreturn X, Y")
    est = abc_posterior(p, 200_000, 0.05, seed=3)
    assert est.accepted == 200_000
    rng_est = abc_posterior(p, 200_000, 0.05, seed=3)
    np.testing.assert_array_equal(est.mean, rng_est.mean)
    np.testing.assert_allclose(est.cov, [[2, 4], [4, 9]], rtol=0.03)


def test_abc_chunking_and_workers_do_not_change_result():
    p = parse(FEASIBLE)
    a = abc_posterior(p, 300_000, 0.1, seed=4, chunk=100_000)
    b = abc_posterior(p, 300_000, 0.1, seed=4, chunk=100_000, workers=3)
    assert a.accepted == b.accepted
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-13)
    np.testing.assert_allclose(a.cov, b.cov, rtol=1e-11)


def test_abc_streaming_merge_matches_single_chunk():
    p = parse(FEASIBLE)
    a = abc_posterior(p, 200_000, 0.2, seed=5, chunk=200_000)
    rng = np.random.default_rng(np.random.SeedSequence(5).spawn(1)[0])
    x = 15 + math.sqrt(2) * rng.standard_normal(200_000)
    y = 2 + rng.standard_normal(200_000)
    keep = np.abs(x + y - 16) <= 0.2 * math.sqrt(3)
    ref = np.column_stack([x[keep], y[keep]])
    np.testing.assert_allclose(a.mean, ref.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(a.cov, np.cov(ref.T), rtol=1e-10)


def test_abc_converges_under_refinement():
    p = parse(FEASIBLE)
    exact = run_program(p).cov[0, 0]
    errors = []
    for level, (bw, n) in enumerate([(0.8, 100_000), (0.4, 400_000), (0.2, 1_600_000)]):
        est = abc_posterior(p, n, bw, seed=10 + level)
        errors.append(abs(est.cov[0, 0] - exact))
    assert errors[0] > errors[1] > errors[2]
