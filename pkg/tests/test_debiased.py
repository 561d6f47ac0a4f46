from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsqdebias import dgp
from lsqdebias.debiased import (
    EstimatorConfig,
    FoldError,
    estimate,
    fit_nuisances,
    normal_quantile,
    population_estimate,
    split_indices,
)
from lsqdebias.distributions import Data, Sample
from lsqdebias.function_space import BasisError, CoefVector
from lsqdebias.functionals import FunctionalPair
from lsqdebias.score import NuisanceTuple, score, score_values


def config(R, **kw):
    return EstimatorConfig(R.hspace, R.gspace, R.functionals, **kw)


def test_zero_tuple_score(exact, rng):
    eta = NuisanceTuple.zeros(exact.hspace, exact.gspace)
    d = exact.sample(50, 1)
    assert np.all(score_values(d, eta, exact.functionals) == 0)
    assert score(Sample(0.0, 3.3, 1.0), eta, FunctionalPair()) == 0.0


def test_identity_oracle_score_mean(identity):
    eta = identity.oracle.nuisances()
    assert population_estimate(identity.pmf, eta, identity.functionals).psi_hat == pytest.approx(0.5, abs=1e-12)


def test_perturb_r_by_constant(exact, rng):
    eta = exact.oracle.nuisances()
    c = 0.37
    bumped = eta.replace(r=eta.r + CoefVector(eta.r.space, np.full(eta.r.space.dimension, c)))
    d = exact.sample(40, 2)
    diff = score_values(d, bumped, exact.functionals) - score_values(d, eta, exact.functionals)
    expected = (eta.alpha_h(d.x) - eta.xi_alpha_h(d.z)) * c
    np.testing.assert_allclose(diff, expected, atol=1e-12)


def test_score_single_matches_vector(exact):
    eta = exact.oracle.nuisances()
    d = exact.sample(5, 4)
    vec = score_values(d, eta, exact.functionals)
    for i, w in enumerate(d.samples()):
        assert score(w, eta, exact.functionals) == pytest.approx(vec[i], abs=1e-13)


def test_nuisance_domains(exact):
    eta = exact.oracle.nuisances()
    with pytest.raises(BasisError):
        eta.replace(h=eta.g)


def test_split_sizes():
    assert [f.size for f in split_indices(8, 4, 1)] == [2, 2, 2, 2]
    assert [f.size for f in split_indices(10, 4, 1)] == [3, 3, 2, 2]
    a, b = split_indices(8, 4, 1), split_indices(8, 4, 2)
    assert any(not np.array_equal(x, y) for x, y in zip(a, b))
    with pytest.raises(ValueError):
        split_indices(7, 4, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(8, 500), st.integers(0, 2**32 - 1))
def test_split_is_partition(n, seed):
    folds = split_indices(n, 4, seed)
    allidx = np.concatenate(folds)
    assert np.array_equal(np.sort(allidx), np.arange(n))
    assert max(f.size for f in folds) - min(f.size for f in folds) <= 1
    assert all(np.array_equal(a, b) for a, b in zip(folds, split_indices(n, 4, seed)))


def test_report_invariants(exact):
    d = exact.sample(800, 5)
    r = estimate(d, config(exact, seed=3))
    assert r.ci_low <= r.psi_hat <= r.ci_high
    assert r.ci_high - r.ci_low == pytest.approx(2 * normal_quantile(0.95) * r.std_error, abs=1e-12)
    assert r.n_eval == 800 and len(r.per_fold) == 4


def test_cross_fit_mean(exact):
    r = estimate(exact.sample(800, 6), config(exact, seed=1))
    assert r.psi_hat == np.mean([p for p, _, _ in r.per_fold])


def test_single_split(exact):
    r = estimate(exact.sample(800, 6), config(exact, seed=1, cross_fit=False))
    assert len(r.per_fold) == 1 and r.n_eval == 200


def test_level_nesting(exact):
    d = exact.sample(800, 7)
    a = estimate(d, config(exact, seed=2, level=0.95))
    b = estimate(d, config(exact, seed=2, level=0.99))
    assert b.ci_low < a.ci_low and a.ci_high < b.ci_high


def test_determinism(exact):
    d = exact.sample(600, 8)
    assert estimate(d, config(exact, seed=4)) == estimate(d, config(exact, seed=4))


def test_per_fold_variance_option(exact):
    d = exact.sample(600, 8)
    pooled = estimate(d, config(exact, seed=4))
    per = estimate(d, config(exact, seed=4, variance="per_fold"))
    assert pooled.psi_hat == per.psi_hat
    assert per.std_error <= pooled.std_error + 1e-15


@pytest.mark.parametrize("name", ["identity", "table", "exact", "no_solution", "weak_id"])
def test_plug_in_exactness(name, request):
    R = request.getfixturevalue(name)
    rep = estimate(R.pmf.as_data(), config(R), nuisances=R.oracle.nuisances())
    assert abs(rep.psi_hat - R.oracle.psi) <= 1e-10


def test_population_nuisances_without_sample(exact):
    """Feeding the pmf to every learner with a tiny ridge recovers the oracle tuple."""
    cfg = config(exact, lambdas={"h": 1e-10, "g": 1e-10, "alpha_h": 1e-10, "alpha_g": 1e-10})
    eta = fit_nuisances(exact.pmf, exact.pmf, exact.pmf, cfg)
    for (name, got), (_, want) in zip(eta.items(), exact.oracle.nuisances().items()):
        np.testing.assert_allclose(got.coef, want.coef, atol=1e-5, err_msg=name)


def test_population_requires_frozen_nuisances(exact):
    with pytest.raises(ValueError):
        estimate(exact.pmf.as_data(), config(exact))


def test_fold_error_on_identical_samples(exact):
    d = Data(np.full(40, 1.0), np.ones(40), np.full(40, 2.0))
    with pytest.raises(FoldError) as info:
        estimate(d, config(exact))
    err = info.value
    assert err.rotation == 0 and err.role == "primary-fit"
    assert isinstance(err.__cause__, np.linalg.LinAlgError)


def test_config_validation(exact):
    with pytest.raises(ValueError):
        config(exact, lambdas={"hh": 0.1})
    with pytest.raises(ValueError):
        config(exact, lambdas={"h": -1.0})
    with pytest.raises(ValueError):
        config(exact, level=1.0)
    with pytest.raises(ValueError):
        EstimatorConfig(exact.gspace, exact.hspace)


def test_normal_quantile():
    assert normal_quantile(0.95) == pytest.approx(1.959963984540054, abs=1e-12)
    assert normal_quantile(0.99) == pytest.approx(2.5758293035489004, abs=1e-12)


def test_report_serialization(exact):
    r = estimate(exact.sample(400, 1), config(exact))
    lines = r.to_csv().splitlines()
    assert lines[0] == "psi_hat,std_error,ci_low,ci_high,level,n_eval,per_fold"
    assert "95% interval" in r.to_text()


def test_identity_within_three_se():
    R = dgp.realize(dgp.identity_dgp(1.0))
    hits = 0
    seeds = np.random.SeedSequence(77).spawn(200)
    for s in seeds:
        a, b = (int(v) for v in s.generate_state(2))
        r = estimate(R.sample(4000, a), config(R, seed=b))
        hits += abs(r.psi_hat - 0.5) <= 3 * r.std_error
    assert hits >= 190
