"""Closed-form nuisance learners over linear sieves.

With ``h = Phi theta`` and critic ``g = Psi b`` every penalized minimax
problem

    min_theta max_b  E_n[2 (c(W) g - h g) - g^2 + lam h^2]

is a concave-convex quadratic. The critic's best response is
``b = Gc^{-1} (mu - C theta)`` and the outer problem reduces to

    (C' Gc^{-1} C + lam Gh) theta = C' Gc^{-1} mu

where ``Gc``, ``Gh`` are the weighted Grams, ``C`` the critic-by-hypothesis
cross moments and ``mu`` the moments of the linear term. The learners are
pure functions of their inputs; any sample splitting happens in the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .distributions import as_data
from .function_space import BasisError, BasisSpec, CoefVector, Domain, PSD_TOL, SingularGramError
from .functionals import FunctionalPair, moment_vector

JITTER = 1e-10
MAX_CONDITION = 1e14


class DegenerateDesignError(SingularGramError):
    """The sample carries no variation along the basis (rank <= 1 Gram)."""


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, msg: str, condition: float):
        super().__init__(f"{msg} (condition estimate {condition:.3e})")
        self.condition = condition


@dataclass(frozen=True)
class MinimaxFit:
    coef: CoefVector
    lam: float
    saddle_value: float
    critic_coef: CoefVector


def default_lambda(n: int, beta: float = 1.0) -> float:
    """Ridge level ``delta_n ** (2 / min(beta + 1, 2))`` with ``delta_n = n ** -0.5``."""
    return float(n) ** (-1.0 / min(beta + 1.0, 2.0))


def _weighted_gram(design: np.ndarray, w: np.ndarray) -> np.ndarray:
    m = design.T @ (w[:, None] * design)
    return 0.5 * (m + m.T)


def _jittered(gm: np.ndarray, what: str) -> np.ndarray:
    """Gram plus ``JITTER * trace / dim``; rejects designs with no variation."""
    d = gm.shape[0]
    eig = np.linalg.eigvalsh(gm)
    top = eig[-1] if d else 0.0
    if d and top <= 0:
        raise DegenerateDesignError(f"{what} is identically zero")
    rank = int(np.sum(eig > PSD_TOL * top))
    if d >= 2 and rank <= 1:
        raise DegenerateDesignError(f"{what} has rank {rank} of {d}: the sample carries no variation")
    return gm + JITTER * np.trace(gm) / max(d, 1) * np.eye(d)


def _pd_solve(m: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystemError(f"{what} is singular", float(cond))
    return linalg.solve(m, rhs, assume_a="pos")


def _minimax(data, hyp: BasisSpec, critic: BasisSpec, mu: np.ndarray, lam: float) -> MinimaxFit:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    data = as_data(data)
    if len(data) == 0:
        raise ValueError("empty sample")
    if critic.dimension == 0:
        # zero critic: only the ridge penalty remains
        return MinimaxFit(CoefVector.zeros(hyp), lam, 0.0, CoefVector.zeros(critic))
    w = data.weights
    phi = hyp.design(data.points(hyp.domain))
    psi = critic.design(data.points(critic.domain))
    gh = _weighted_gram(phi, w)
    gc = _weighted_gram(psi, w)
    cross = psi.T @ (w[:, None] * phi)
    gc_j = _jittered(gc, f"empirical {critic.domain.value}-Gram")
    gh_j = _jittered(gh, f"empirical {hyp.domain.value}-Gram")
    gc_inv_cross = linalg.solve(gc_j, cross, assume_a="pos")
    gc_inv_mu = linalg.solve(gc_j, mu, assume_a="pos")
    system = cross.T @ gc_inv_cross + lam * gh_j
    theta = _pd_solve(0.5 * (system + system.T), cross.T @ gc_inv_mu, "minimax normal system")
    b = gc_inv_mu - gc_inv_cross @ theta
    value = 2 * mu @ b - 2 * b @ cross @ theta - b @ gc @ b + lam * theta @ gh @ theta
    return MinimaxFit(CoefVector(hyp, theta), float(lam), float(value), CoefVector(critic, b))


def minimax_primary(data, hspace: BasisSpec, gspace: BasisSpec, fp: FunctionalPair, lam: float) -> MinimaxFit:
    """Tikhonov minimax estimate of the minimum-norm solution ``h``.

    Solves ``argmin_h max_g E_n[2 (mtilde(W; g) - h(X) g(Z)) - g(Z)^2 + lam h(X)^2]``
    over ``h`` in ``hspace`` and critics ``g`` in ``gspace``.

    Parameters
    ----------
    data : Data, JointPMF or sequence of Sample
        Observations; a pmf gives the population version.
    hspace, gspace : BasisSpec
        Hypothesis space over X and critic space over Z.
    fp : FunctionalPair
        Supplies ``mtilde``.
    lam : float
        Ridge level, strictly positive.

    Returns
    -------
    MinimaxFit
        ``coef`` is the fitted ``h``; ``critic_coef`` the critic at the saddle.
    """
    _expect(hspace, Domain.X, "hspace")
    _expect(gspace, Domain.Z, "gspace")
    return _minimax(data, hspace, gspace, moment_vector(fp, data, gspace), lam)


def minimax_dual(data, hspace: BasisSpec, gspace: BasisSpec, fp: FunctionalPair, lam: float) -> MinimaxFit:
    """Same learner with the roles of X and Z swapped: estimates ``g`` using ``m``."""
    _expect(hspace, Domain.X, "hspace")
    _expect(gspace, Domain.Z, "gspace")
    return _minimax(data, gspace, hspace, moment_vector(fp, data, hspace), lam)


def minimax_weak_riesz(data, hspace: BasisSpec, gspace: BasisSpec, g1: CoefVector, lam: float) -> MinimaxFit:
    """Weak-norm Riesz representer learner.

    With ``g1`` a function of z this fits ``alpha_h`` in ``hspace``:
    ``argmin_a max_g E_n[2 (g1(Z) g(Z) - a(X) g(Z)) - g(Z)^2 + lam a(X)^2]``.
    Passing a function of x instead fits the mirrored ``alpha_g`` in
    ``gspace`` with critics from ``hspace``.
    """
    _expect(hspace, Domain.X, "hspace")
    _expect(gspace, Domain.Z, "gspace")
    data = as_data(data)
    if g1.space.domain is Domain.Z:
        hyp, critic = hspace, gspace
    else:
        hyp, critic = gspace, hspace
    pts = data.points(critic.domain)
    psi = critic.design(pts)
    mu = psi.T @ (data.weights * g1(data.points(g1.space.domain)))
    return _minimax(data, hyp, critic, mu, lam)


def projection_ls(data, input_fn: CoefVector, target_space: BasisSpec) -> CoefVector:
    """Least-squares projection of ``input_fn`` onto ``target_space``.

    Regresses ``input_fn`` evaluated on its own domain on the target basis
    evaluated on the other variable.
    """
    data = as_data(data)
    if len(data) == 0:
        raise ValueError("empty sample")
    if target_space.domain is input_fn.space.domain:
        raise BasisError("projection target must live on the other domain")
    if target_space.dimension == 0:
        return CoefVector.zeros(target_space)
    psi = target_space.design(data.points(target_space.domain))
    y = input_fn(data.points(input_fn.space.domain))
    gm = _jittered(_weighted_gram(psi, data.weights), f"empirical {target_space.domain.value}-Gram")
    return CoefVector(target_space, _pd_solve(gm, psi.T @ (data.weights * y), "projection normal system"))


def riesz_regression(data, space: BasisSpec, fp: FunctionalPair, which: str = "r") -> CoefVector:
    """Strong Riesz representer by ``argmin_f E_n[f^2 / 2 - m(W; f)]`` over ``space``.

    ``which="r"`` estimates ``r_P`` (``mtilde``, Z-space), ``which="a"``
    estimates ``a_P`` (``m``, X-space).
    """
    which = which.lower().removesuffix("hat")
    expected = {"r": Domain.Z, "a": Domain.X}[which]
    _expect(space, expected, "space")
    data = as_data(data)
    if len(data) == 0:
        raise ValueError("empty sample")
    psi = space.design(data.points(space.domain))
    gm = _jittered(_weighted_gram(psi, data.weights), f"empirical {space.domain.value}-Gram")
    return CoefVector(space, _pd_solve(gm, moment_vector(fp, data, space), "Riesz normal system"))


def _expect(space: BasisSpec, domain: Domain, name: str) -> None:
    if space.domain is not domain:
        raise BasisError(f"{name} must be a {domain.value}-space")
