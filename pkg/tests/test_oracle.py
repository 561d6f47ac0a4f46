from __future__ import annotations

import numpy as np
import pytest

from lsqdebias import dgp
from lsqdebias.experiments import tikhonov_errors
from lsqdebias.function_space import BasisError, BasisSpec, CoefVector, Domain
from lsqdebias.oracle import (
    Side,
    bias_identity_check,
    build_operator,
    population_score_mean,
    solve_oracle,
    tikhonov_path,
)
from lsqdebias.score import NuisanceTuple

# Frozen oracle values (computed at first run; they match closed forms:
# Psi = E[r_P(Z)] = 1.1 for the table, 1 + 0.7**3 + 0.4**3 for the spectral designs)
TABLE_PSI = 1.1000000000000014
TABLE_H = [0.600000000000001, 1.6000000000000003, 1.1000000000000008]
TABLE_ALPHA_G = [-0.3999999999999979, 2.6000000000000005]
EXACT_PSI = 1.4069999999999996
EXACT_H = [1.9848726953872184, 1.0050767982739477, 0.010050506338833826]
EXACT_G = [1.7307438208038277, 1.7307438208038277, 0.7509479236905587, -0.21243556529821336]


def dense_reference(pmf):
    """Minimum-norm h and Psi by a separate route: weighted numpy pinv on the cell table."""
    px, pz = pmf.p_x, pmf.p_z
    A = pmf.prob.T / np.sqrt(np.outer(pz, px))
    r = (pmf.prob * pmf.y_values).sum(axis=0) / pz
    h = np.linalg.pinv(A, rcond=1e-10) @ (np.sqrt(pz) * r) / np.sqrt(px)
    g = np.linalg.pinv(A.T, rcond=1e-10) @ np.sqrt(px) / np.sqrt(pz)
    psi = float((pmf.prob * np.outer(h, g)).sum())
    return h, g, psi


def test_table_3x2_frozen(table):
    o = table.oracle
    assert o.psi == pytest.approx(TABLE_PSI, abs=1e-12)
    np.testing.assert_allclose(o.h_dag.coef, TABLE_H, atol=1e-12)
    np.testing.assert_allclose(o.alpha_g_dag.coef, TABLE_ALPHA_G, atol=1e-12)
    np.testing.assert_allclose(o.g_dag.coef, [1.0, 1.0], atol=1e-12)
    assert o.psi == pytest.approx(1.1, abs=1e-12)


def test_table_3x2_matches_bayes(table):
    # T h (z) = E[h(X) | Z = z] by Bayes on the table
    o, pmf = table.oracle, table.pmf
    cond = pmf.prob / pmf.p_z
    np.testing.assert_allclose(cond.T @ o.h_dag.coef, o.r_P.coef, atol=1e-12)


def test_exact_frozen(exact):
    o = exact.oracle
    assert o.psi == pytest.approx(EXACT_PSI, abs=1e-12)
    assert o.psi == pytest.approx(1 + 0.7**3 + 0.4**3, abs=1e-12)
    np.testing.assert_allclose(o.h_dag.coef, EXACT_H, atol=1e-12)
    np.testing.assert_allclose(o.g_dag.coef, EXACT_G, atol=1e-12)


@pytest.mark.parametrize("name", ["table", "exact", "no_solution", "weak_id", "identity"])
def test_against_dense_reference(name, request):
    R = request.getfixturevalue(name)
    h, g, psi = dense_reference(R.pmf)
    o = R.oracle
    np.testing.assert_allclose(o.h_dag.coef, h, atol=1e-10)
    if R.functionals.m_kind.value == "average_value":
        np.testing.assert_allclose(o.g_dag.coef, g, atol=1e-10)
        assert o.psi == pytest.approx(psi, abs=1e-10)


@pytest.mark.parametrize("name", ["exact", "no_solution", "weak_id"])
def test_dense_reference_psi_with_weights(name, request):
    R = request.getfixturevalue(name)
    pmf, o = R.pmf, R.oracle
    px, pz = pmf.p_x, pmf.p_z
    A = pmf.prob.T / np.sqrt(np.outer(pz, px))
    a = R.functionals.x_weight(pmf.x_support)
    g = np.linalg.pinv(A.T, rcond=1e-10) @ (np.sqrt(px) * a) / np.sqrt(pz)
    np.testing.assert_allclose(o.g_dag.coef, g, atol=1e-10)
    h, _, _ = dense_reference(pmf)
    assert o.psi == pytest.approx(float((pmf.prob * np.outer(h, g)).sum()), abs=1e-10)


def test_identity_oracle(identity):
    o = identity.oracle
    assert o.psi == 0.5
    assert o.r_perp_norm == 0.0
    np.testing.assert_allclose(o.h_dag.coef, [0, 1], atol=1e-15)


def test_kernel_masses(no_solution, weak_id):
    assert no_solution.oracle.r_perp_norm == pytest.approx(0.5, abs=1e-6)
    assert not no_solution.oracle.exact_primary_solution
    assert no_solution.oracle.exact_dual_solution
    assert weak_id.oracle.a_perp_norm == pytest.approx(0.5, abs=1e-6)
    assert not weak_id.oracle.exact_dual_solution


@pytest.mark.parametrize("name", ["table", "exact", "no_solution", "weak_id", "identity"])
def test_oracle_invariants(name, request):
    R = request.getfixturevalue(name)
    op, o = R.operator, R.oracle
    T, Ts = op.apply, op.adjoint
    # normal equations
    np.testing.assert_allclose(Ts(T(o.h_dag)).coef, Ts(o.r_P).coef, atol=1e-10)
    np.testing.assert_allclose(T(Ts(o.g_dag)).coef, T(o.a_P).coef, atol=1e-10)
    # Pythagoras for the range/kernel split
    for full, par, perp in ((o.r_P, o.r_parallel, o.r_perp), (o.a_P, o.a_parallel, o.a_perp)):
        assert op.norm(full) ** 2 == pytest.approx(op.norm(par) ** 2 + op.norm(perp) ** 2, abs=1e-10)
    assert op.norm(Ts(o.r_perp)) < 1e-10 and op.norm(T(o.a_perp)) < 1e-10
    # minimum norm: orthogonal to the kernels
    for k in o.kernel_H.T:
        assert abs(op.inner_h(o.h_dag, CoefVector(op.hspace, k))) < 1e-10
    for k in o.kernel_G.T:
        assert abs(op.inner_g(o.g_dag, CoefVector(op.gspace, k))) < 1e-10
    # representer identities: T alpha_h = g, T*T alpha_h = a_par and duals
    np.testing.assert_allclose(T(o.alpha_h_dag).coef, o.g_dag.coef, atol=1e-9)
    np.testing.assert_allclose(Ts(T(o.alpha_h_dag)).coef, o.a_parallel.coef, atol=1e-9)
    np.testing.assert_allclose(Ts(o.alpha_g_dag).coef, o.h_dag.coef, atol=1e-9)
    np.testing.assert_allclose(T(Ts(o.alpha_g_dag)).coef, o.r_parallel.coef, atol=1e-9)
    # both expressions of Psi
    assert op.cross_moment(o.g_dag, o.h_dag) == pytest.approx(o.psi, abs=1e-10)
    assert op.inner_g(o.r_P, o.g_dag) == pytest.approx(o.psi, abs=1e-10)
    assert op.inner_h(o.a_P, o.h_dag) == pytest.approx(o.psi, abs=1e-10)
    assert op.inner_g(T(o.alpha_h_dag), o.r_P) == pytest.approx(o.psi, abs=1e-10)
    assert op.inner_h(Ts(o.alpha_g_dag), o.a_P) == pytest.approx(o.psi, abs=1e-10)
    assert not o.source_condition_violated


@pytest.mark.parametrize("name", ["no_solution", "weak_id"])
def test_kernel_shift_invariance(name, request, rng):
    R = request.getfixturevalue(name)
    op, o = R.operator, R.oracle
    assert o.kernel_H.shape[1] + o.kernel_G.shape[1] > 0
    for _ in range(50):
        h = o.h_dag.coef + o.kernel_H @ rng.standard_normal(o.kernel_H.shape[1]) * 3
        g = o.g_dag.coef + o.kernel_G @ rng.standard_normal(o.kernel_G.shape[1]) * 3
        psi = op.cross_moment(CoefVector(op.gspace, g), CoefVector(op.hspace, h))
        assert psi == pytest.approx(o.psi, abs=1e-9)


def test_singular_values_match_design(exact, weak_id):
    for R in (exact, weak_id):
        np.testing.assert_allclose(R.oracle.singular_values[:3], [1.0, 0.7, 0.4], rtol=1e-6)


def test_build_operator_rejects_swapped_spaces(table):
    with pytest.raises(BasisError):
        build_operator(table.pmf, table.gspace, table.hspace)


def test_solution_csv(table):
    lines = table.oracle.to_csv().splitlines()
    assert lines[0] == "name,domain,index,value"
    assert any(line.startswith("psi,,,") for line in lines)


# ----------------------------------------------------------------- Tikhonov

def test_tikhonov_identity_operator(identity):
    op, o = identity.operator, identity.oracle
    for lam in (0.1, 1.0, 7.0):
        (h,) = tikhonov_path(op, o.r_P, [lam])
        np.testing.assert_allclose(h.coef, o.r_P.coef / (1 + lam), atol=1e-14)


def test_tikhonov_limits(table):
    op, o = table.operator, table.oracle
    h_small, h_big = tikhonov_path(op, o.r_P, [1e-10, 1e8])
    assert op.norm(h_small - o.h_dag) <= 1e-6
    assert op.norm(h_big) <= 1e-6 * op.norm(o.r_P)


def test_tikhonov_rejects_nonpositive(table):
    with pytest.raises(ValueError):
        tikhonov_path(table.operator, table.oracle.r_P, [1e-3, 0.0])


def test_tikhonov_dual_side(table):
    op, o = table.operator, table.oracle
    (g,) = tikhonov_path(op, o.a_P, [1e-10], Side.DUAL)
    assert op.norm(g - o.g_dag) <= 1e-6
    (ah,) = tikhonov_path(op, o.g_dag, [1e-10], Side.WEAK_RIESZ_PRIMAL)
    assert op.norm(ah - o.alpha_h_dag) <= 1e-5


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 3.0])
def test_tikhonov_slopes(beta):
    R = dgp.realize(dgp.source_dgp(beta))
    lambdas = np.geomspace(1e-6, 1e-1, 11)
    err = tikhonov_errors(R, lambdas)
    strong = np.polyfit(np.log(lambdas), np.log(err["h_strong"]), 1)[0]
    weak = np.polyfit(np.log(lambdas), np.log(err["h_weak"]), 1)[0]
    assert abs(strong - min(beta, 2)) <= 0.15
    assert abs(weak - min(beta + 1, 2)) <= 0.15


def test_weak_riesz_ratio_decreases(exact):
    op, o = exact.operator, exact.oracle
    lambdas = np.geomspace(1e-3, 1e-7, 5)
    path = tikhonov_path(op, o.g_dag, lambdas, Side.WEAK_RIESZ_PRIMAL)
    ratio = [op.norm(op.apply(a - o.alpha_h_dag)) ** 2 / lam for a, lam in zip(path, lambdas)]
    assert all(b < a for a, b in zip(ratio, ratio[1:]))
    assert ratio[-1] < 1e-5


# ----------------------------------------------------------------- bias identity

def perturbed(eta: NuisanceTuple, rng, scale=0.5) -> NuisanceTuple:
    return eta.replace(**{n: v + CoefVector(v.space, scale * rng.standard_normal(v.space.dimension))
                          for n, v in eta.items()})


@pytest.mark.parametrize("name", ["identity", "no_solution", "weak_id", "table"])
def test_bias_identity(name, request, rng):
    R = request.getfixturevalue(name)
    o = R.oracle
    base = o.nuisances()
    b0 = bias_identity_check(R.operator, R.pmf, R.functionals, base, o)
    assert abs(b0.lhs) < 1e-10
    for _ in range(100):
        b = bias_identity_check(R.operator, R.pmf, R.functionals, perturbed(base, rng), o)
        assert b.residual <= 1e-8


def test_zero_tuple_score_mean(table):
    zero = NuisanceTuple.zeros(table.hspace, table.gspace)
    assert population_score_mean(table.pmf, zero, table.functionals) == 0.0
    b = bias_identity_check(table.operator, table.pmf, table.functionals, zero, table.oracle)
    assert b.lhs == pytest.approx(-table.oracle.psi)


def test_bias_identity_rejects_foreign_basis(table):
    other = BasisSpec.polynomial(Domain.X, 2)
    eta = table.oracle.nuisances().replace(h=CoefVector(other, [0.0, 1.0, 0.0]))
    with pytest.raises(BasisError):
        bias_identity_check(table.operator, table.pmf, table.functionals, eta, table.oracle)


def test_solve_oracle_deterministic(exact):
    again = solve_oracle(exact.operator, exact.pmf, exact.functionals)
    assert again.psi == exact.oracle.psi
