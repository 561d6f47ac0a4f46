"""Exact population computations on finite-support distributions.

The operator ``T`` sends ``h`` to the best ``L2(P_Z)`` approximation of
``h(X)`` inside the Z-space. In basis coordinates ``T = G_Z^{-1} C`` with
``C[i, j] = E[psi_i(Z) phi_j(X)]``; its adjoint is ``G_X^{-1} C'``.
Everything spectral is done on the whitened matrix ``L_Z^{-1} C L_X^{-T}``
(``L`` the Cholesky factors of the population Grams) so that adjoints and
norms are the ``L2(P)`` ones.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .distributions import JointPMF
from .function_space import (
    BasisError,
    BasisSpec,
    CoefVector,
    Domain,
    GramMatrix,
    Weighting,
    cholesky_factor,
    gram,
)
from .functionals import FunctionalPair, population_riesz
from .score import NuisanceTuple, score_values

RANK_RTOL = 1e-10
SOURCE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Population operator between an X-space and a Z-space."""

    hspace: BasisSpec
    gspace: BasisSpec
    gram_h: GramMatrix
    gram_g: GramMatrix
    cross: np.ndarray = field(repr=False)
    T: np.ndarray = field(repr=False)
    T_adj: np.ndarray = field(repr=False)
    chol_h: np.ndarray = field(repr=False)
    chol_g: np.ndarray = field(repr=False)
    whitened: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    singular_values: np.ndarray = field(repr=False)
    Vt: np.ndarray = field(repr=False)
    rank: int = 0

    # whitening maps: coefficients <-> orthonormal coordinates
    def white_h(self, u: CoefVector) -> np.ndarray:
        self._check(u, self.hspace)
        return self.chol_h.T @ u.coef

    def white_g(self, v: CoefVector) -> np.ndarray:
        self._check(v, self.gspace)
        return self.chol_g.T @ v.coef

    def unwhite_h(self, w: np.ndarray) -> CoefVector:
        return CoefVector(self.hspace, linalg.solve_triangular(self.chol_h.T, w, lower=False))

    def unwhite_g(self, w: np.ndarray) -> CoefVector:
        return CoefVector(self.gspace, linalg.solve_triangular(self.chol_g.T, w, lower=False))

    @staticmethod
    def _check(u: CoefVector, space: BasisSpec) -> None:
        if u.space != space:
            raise BasisError(f"expected a vector over {space}, got one over {u.space}")

    def apply(self, u: CoefVector) -> CoefVector:
        self._check(u, self.hspace)
        return CoefVector(self.gspace, self.T @ u.coef)

    def adjoint(self, v: CoefVector) -> CoefVector:
        self._check(v, self.gspace)
        return CoefVector(self.hspace, self.T_adj @ v.coef)

    def inner_h(self, u: CoefVector, v: CoefVector) -> float:
        return self.gram_h.inner(u, v)

    def inner_g(self, u: CoefVector, v: CoefVector) -> float:
        return self.gram_g.inner(u, v)

    def norm(self, u: CoefVector) -> float:
        gm = self.gram_h if u.space == self.hspace else self.gram_g
        return gm.norm(u)

    def cross_moment(self, g: CoefVector, h: CoefVector) -> float:
        """``E_P[g(Z) h(X)]``."""
        self._check(g, self.gspace)
        self._check(h, self.hspace)
        return float(g.coef @ self.cross @ h.coef)

    @property
    def op_norm(self) -> float:
        return float(self.singular_values[0]) if self.singular_values.size else 0.0

    def _range_g(self) -> np.ndarray:
        return self.U[:, : self.rank]

    def _range_h(self) -> np.ndarray:
        return self.Vt[: self.rank].T

    def kernel_h(self) -> np.ndarray:
        """Gram-orthonormal basis of ker T as columns of X-coefficients."""
        _, _, vt = np.linalg.svd(self.whitened, full_matrices=True)
        null = vt[self.rank:].T
        return linalg.solve_triangular(self.chol_h.T, null, lower=False)

    def kernel_g(self) -> np.ndarray:
        """Gram-orthonormal basis of ker T* as columns of Z-coefficients."""
        u, _, _ = np.linalg.svd(self.whitened, full_matrices=True)
        null = u[:, self.rank:]
        return linalg.solve_triangular(self.chol_g.T, null, lower=False)

    def pinv_white(self, w: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """Pseudoinverse of the whitened operator (or of its adjoint) applied to ``w``."""
        r = self.rank
        s = self.singular_values[:r]
        if adjoint:
            return self.U[:, :r] @ ((self.Vt[:r] @ w) / s)
        return self.Vt[:r].T @ ((self.U[:, :r].T @ w) / s)


def build_operator(pmf: JointPMF, hspace: BasisSpec, gspace: BasisSpec) -> OperatorMatrix:
    """Matrix of the conditional-expectation operator under ``pmf``.

    Raises
    ------
    SingularGramError
        If either population Gram matrix is singular.
    """
    if hspace.domain is not Domain.X or gspace.domain is not Domain.Z:
        raise BasisError("hspace must be an X-space and gspace a Z-space")
    gh = gram(hspace, Weighting.POPULATION, pmf)
    gg = gram(gspace, Weighting.POPULATION, pmf)
    lh = cholesky_factor(gh, "population X-Gram")
    lg = cholesky_factor(gg, "population Z-Gram")
    phi = hspace.design(pmf.x_support)
    psi = gspace.design(pmf.z_support)
    cross = psi.T @ pmf.prob.T @ phi
    T = linalg.cho_solve((lg, True), cross)
    T_adj = linalg.cho_solve((lh, True), cross.T)
    A = linalg.solve_triangular(lg, cross, lower=True)
    A = linalg.solve_triangular(lh, A.T, lower=True).T
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    return OperatorMatrix(hspace, gspace, gh, gg, cross, T, T_adj, lh, lg, A, U, s, Vt, rank)


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """Minimum-norm population solutions and the associated decompositions."""

    h_dag: CoefVector
    g_dag: CoefVector
    alpha_h_dag: CoefVector
    alpha_g_dag: CoefVector
    r_P: CoefVector
    r_parallel: CoefVector
    r_perp: CoefVector
    a_P: CoefVector
    a_parallel: CoefVector
    a_perp: CoefVector
    xi_h: CoefVector
    xi_g: CoefVector
    xi_alpha_h: CoefVector
    xi_alpha_g: CoefVector
    psi: float
    kernel_H: np.ndarray = field(repr=False)
    kernel_G: np.ndarray = field(repr=False)
    singular_values: np.ndarray = field(repr=False)
    rank: int = 0
    source_condition_violated: bool = False
    r_perp_norm: float = 0.0
    a_perp_norm: float = 0.0

    @property
    def exact_primary_solution(self) -> bool:
        return self.r_perp_norm <= 1e-9 * max(1.0, float(np.linalg.norm(self.r_P.coef)))

    @property
    def exact_dual_solution(self) -> bool:
        return self.a_perp_norm <= 1e-9 * max(1.0, float(np.linalg.norm(self.a_P.coef)))

    def nuisances(self) -> NuisanceTuple:
        """The minimum-norm population tuple."""
        return NuisanceTuple(
            h=self.h_dag, g=self.g_dag,
            alpha_h=self.alpha_h_dag, alpha_g=self.alpha_g_dag,
            xi_h=self.xi_h, xi_g=self.xi_g,
            xi_alpha_h=self.xi_alpha_h, xi_alpha_g=self.xi_alpha_g,
            r=self.r_P, a=self.a_P,
        )

    _VECTORS = (
        "h_dag", "g_dag", "alpha_h_dag", "alpha_g_dag", "r_P", "r_parallel", "r_perp",
        "a_P", "a_parallel", "a_perp", "xi_h", "xi_g", "xi_alpha_h", "xi_alpha_g",
    )

    def to_csv(self) -> str:
        """Flat ``name,domain,index,value`` table; scalars use an empty index."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "domain", "index", "value"])
        for name in self._VECTORS:
            v: CoefVector = getattr(self, name)
            for i, c in enumerate(v.coef):
                w.writerow([name, v.space.domain.value, i, repr(float(c))])
        for name, val in (
            ("psi", self.psi),
            ("r_perp_norm", self.r_perp_norm),
            ("a_perp_norm", self.a_perp_norm),
            ("rank", self.rank),
            ("source_condition_violated", int(self.source_condition_violated)),
        ):
            w.writerow([name, "", "", repr(float(val))])
        for i, s in enumerate(self.singular_values):
            w.writerow(["singular_value", "", i, repr(float(s))])
        return buf.getvalue()


def solve_oracle(op: OperatorMatrix, pmf: JointPMF, functionals: FunctionalPair) -> OracleSolution:
    """Population solutions of both least-squares problems and their Riesz representers."""
    r_P = population_riesz(functionals, pmf, op.gspace)
    a_P = population_riesz(functionals, pmf, op.hspace)
    rw, aw = op.white_g(r_P), op.white_h(a_P)
    Ur, Vr = op._range_g(), op._range_h()
    r_par_w = Ur @ (Ur.T @ rw)
    a_par_w = Vr @ (Vr.T @ aw)

    h_w = op.pinv_white(rw)
    g_w = op.pinv_white(aw, adjoint=True)
    ah_w = op.pinv_white(g_w)
    ag_w = op.pinv_white(h_w, adjoint=True)
    A = op.whitened
    res_h = np.linalg.norm(A @ ah_w - g_w)
    res_g = np.linalg.norm(A.T @ ag_w - h_w)
    violated = bool(
        res_h > SOURCE_TOL * max(1.0, np.linalg.norm(g_w))
        or res_g > SOURCE_TOL * max(1.0, np.linalg.norm(h_w))
    )

    h_dag, g_dag = op.unwhite_h(h_w), op.unwhite_g(g_w)
    alpha_h, alpha_g = op.unwhite_h(ah_w), op.unwhite_g(ag_w)
    r_perp_w, a_perp_w = rw - r_par_w, aw - a_par_w
    return OracleSolution(
        h_dag=h_dag,
        g_dag=g_dag,
        alpha_h_dag=alpha_h,
        alpha_g_dag=alpha_g,
        r_P=r_P,
        r_parallel=op.unwhite_g(r_par_w),
        r_perp=op.unwhite_g(r_perp_w),
        a_P=a_P,
        a_parallel=op.unwhite_h(a_par_w),
        a_perp=op.unwhite_h(a_perp_w),
        xi_h=op.apply(h_dag),
        xi_g=op.adjoint(g_dag),
        xi_alpha_h=op.apply(alpha_h),
        xi_alpha_g=op.adjoint(alpha_g),
        psi=float(g_w @ (A @ h_w)),
        kernel_H=op.kernel_h(),
        kernel_G=op.kernel_g(),
        singular_values=op.singular_values.copy(),
        rank=op.rank,
        source_condition_violated=violated,
        r_perp_norm=float(np.linalg.norm(r_perp_w)),
        a_perp_norm=float(np.linalg.norm(a_perp_w)),
    )


class Side(str, enum.Enum):
    PRIMAL = "primal"
    DUAL = "dual"
    WEAK_RIESZ_PRIMAL = "weak_riesz_primal"
    WEAK_RIESZ_DUAL = "weak_riesz_dual"


def tikhonov_path(op: OperatorMatrix, target: CoefVector, lambdas, side=Side.PRIMAL) -> list[CoefVector]:
    """Population ridge solutions ``argmin ||K u - target||^2 + lam ||u||^2``.

    ``K`` is ``T`` for the primal sides (``target`` a Z-function, e.g. ``r_P``
    or ``g_dag``) and ``T*`` for the dual sides (``target`` an X-function).
    Computed through the SVD filter ``s / (s^2 + lam)``.
    """
    side = Side(side)
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if np.any(~(lambdas > 0)):
        raise ValueError("every lambda must be positive")
    r = op.rank
    s = op.singular_values[:r]
    if side in (Side.PRIMAL, Side.WEAK_RIESZ_PRIMAL):
        coords = op.U[:, :r].T @ op.white_g(target)
        basis, back = op.Vt[:r].T, op.unwhite_h
    else:
        coords = op.Vt[:r] @ op.white_h(target)
        basis, back = op.U[:, :r], op.unwhite_g
    return [back(basis @ (coords * s / (s**2 + lam))) for lam in lambdas]


@dataclass(frozen=True)
class BiasReport:
    lhs: float
    termA: float
    termB: float
    termC: float
    residual: float


def population_score_mean(pmf: JointPMF, eta: NuisanceTuple, fp: FunctionalPair) -> float:
    """``E_P[chi(W; eta)]`` by summation over the support cells."""
    data = pmf.as_data()
    return data.expect(score_values(data, eta, fp))


def bias_identity_check(
    op: OperatorMatrix,
    pmf: JointPMF,
    functionals: FunctionalPair,
    eta: NuisanceTuple,
    anchor: OracleSolution,
) -> BiasReport:
    """Compare the score's population bias with its three-term expansion.

    ``lhs`` is obtained by exact summation of the score over the pmf;
    the three terms come from Gram inner products against ``anchor``.
    """
    for name, v in eta.items():
        expected = op.hspace if v.space.domain is Domain.X else op.gspace
        if v.space != expected:
            raise BasisError(f"nuisance {name} is not expressed in the oracle basis")
    lhs = population_score_mean(pmf, eta, functionals) - anchor.psi

    T, Ts = op.apply, op.adjoint
    ig, ih = op.inner_g, op.inner_h
    dh, dg = eta.h - anchor.h_dag, eta.g - anchor.g_dag
    term_a = op.cross_moment(dg, dh)

    t_ah = T(eta.alpha_h)
    term_b = (
        ig(T(dh), T(anchor.alpha_h_dag - eta.alpha_h))
        + ig(T(eta.h) - eta.xi_h, t_ah - eta.xi_alpha_h)
        + ig(t_ah - eta.xi_alpha_h, eta.r - anchor.r_P)
    )
    ts_ag = Ts(eta.alpha_g)
    term_c = (
        ih(Ts(dg), Ts(anchor.alpha_g_dag - eta.alpha_g))
        + ih(ts_ag - eta.xi_alpha_g, Ts(eta.g) - eta.xi_g)
        + ih(ts_ag - eta.xi_alpha_g, eta.a - anchor.a_P)
    )
    return BiasReport(lhs, term_a, term_b, term_c, abs(lhs - (term_a + term_b + term_c)))
