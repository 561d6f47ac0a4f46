"""The ten-component nuisance tuple and the debiased score built from it."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .distributions import Data, Sample
from .function_space import BasisError, BasisSpec, CoefVector, Domain
from .functionals import FunctionalPair

X_FIELDS = ("h", "alpha_h", "xi_g", "xi_alpha_g", "a")
Z_FIELDS = ("g", "alpha_g", "xi_h", "xi_alpha_h", "r")


@dataclass(frozen=True)
class NuisanceTuple:
    """``(h, g, alpha_h, alpha_g, xi_h, xi_g, xi_alpha_h, xi_alpha_g, r, a)``.

    ``h``, ``alpha_h``, ``xi_g``, ``xi_alpha_g`` and ``a`` are functions of x;
    the other five are functions of z.
    """

    h: CoefVector
    g: CoefVector
    alpha_h: CoefVector
    alpha_g: CoefVector
    xi_h: CoefVector
    xi_g: CoefVector
    xi_alpha_h: CoefVector
    xi_alpha_g: CoefVector
    r: CoefVector
    a: CoefVector

    def __post_init__(self):
        for name in X_FIELDS:
            if getattr(self, name).space.domain is not Domain.X:
                raise BasisError(f"{name} must be a function of x")
        for name in Z_FIELDS:
            if getattr(self, name).space.domain is not Domain.Z:
                raise BasisError(f"{name} must be a function of z")

    @classmethod
    def zeros(cls, hspace: BasisSpec, gspace: BasisSpec) -> NuisanceTuple:
        return cls(**{
            f.name: CoefVector.zeros(hspace if f.name in X_FIELDS else gspace)
            for f in fields(cls)
        })

    def replace(self, **changes) -> NuisanceTuple:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return NuisanceTuple(**d)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def score_values(data: Data, eta: NuisanceTuple, fp: FunctionalPair) -> np.ndarray:
    """Score evaluated at every row of ``data``.

    Implements, term by term,

        -h(x) xi_ah(z) + mtilde(w; xi_ah) - (alpha_h(x) - xi_ah(z)) (xi_h(z) - r(z))
        -g(z) xi_ag(x) + m(w; xi_ag)      - (alpha_g(z) - xi_ag(x)) (xi_g(x) - a(x))
        + g(z) h(x)

    with ``alpha_g`` read at z and ``xi_alpha_g`` at x.
    """
    x, z = data.x, data.z
    hx, gz = eta.h(x), eta.g(z)
    xi_ah, xi_ag = eta.xi_alpha_h(z), eta.xi_alpha_g(x)
    primal = (
        -hx * xi_ah
        + fp.mtilde_multiplier(data) * xi_ah
        - (eta.alpha_h(x) - xi_ah) * (eta.xi_h(z) - eta.r(z))
    )
    dual = (
        -gz * xi_ag
        + fp.m_multiplier(data) * xi_ag
        - (eta.alpha_g(z) - xi_ag) * (eta.xi_g(x) - eta.a(x))
    )
    return primal + dual + gz * hx


def score(w: Sample, eta: NuisanceTuple, fp: FunctionalPair) -> float:
    d = Data(np.array([w[0]]), np.array([w[1]]), np.array([w[2]]))
    return float(score_values(d, eta, fp)[0])
