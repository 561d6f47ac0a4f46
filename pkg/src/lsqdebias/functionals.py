"""Known linear maps ``m(w; h)`` and ``mtilde(w; g)`` defining the target.

Both supported families are multiplier functionals: ``mtilde(w; g) =
c(w) g(z)`` and ``m(w; h) = d(w) h(x)``. The instrumental-variable choice is
``mtilde(w; g) = y g(z)`` with ``m(w; h) = h(x)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import linalg

from .distributions import Data, JointPMF, Sample, as_data
from .function_space import BasisError, CoefVector, Domain, Weighting, cholesky_factor, gram


class MTildeKind(str, enum.Enum):
    IV_OUTCOME = "iv_outcome"
    WEIGHTED_Z = "weighted_z"


class MKind(str, enum.Enum):
    AVERAGE_VALUE = "average_value"
    WEIGHTED_X = "weighted_x"


@dataclass(frozen=True)
class WeightFunction:
    """A scalar weight on one domain: a lookup table or a polynomial.

    With ``points`` set, the weight is defined only on those points and
    ``values`` gives its value there. Otherwise ``poly`` holds polynomial
    coefficients in increasing degree (``(1.0,)`` is the constant one).
    """

    points: tuple[float, ...] | None = None
    values: tuple[float, ...] = ()
    poly: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.points is not None:
            object.__setattr__(self, "points", tuple(float(p) for p in self.points))
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if len(self.points) != len(self.values):
                raise ValueError("weight table needs one value per point")
        else:
            object.__setattr__(self, "poly", tuple(float(c) for c in self.poly))

    @classmethod
    def constant(cls, c: float = 1.0) -> WeightFunction:
        return cls(poly=(float(c),))

    @classmethod
    def table(cls, points, values) -> WeightFunction:
        return cls(points=tuple(points), values=tuple(values))

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.points is None:
            return np.polynomial.polynomial.polyval(t, np.asarray(self.poly))
        pts = np.asarray(self.points)
        vals = np.asarray(self.values)
        order = np.argsort(pts)
        pts, vals = pts[order], vals[order]
        idx = np.clip(np.searchsorted(pts, t), 0, max(pts.size - 1, 0))
        left = np.clip(idx - 1, 0, max(pts.size - 1, 0))
        idx = np.where(np.abs(pts[left] - t) < np.abs(pts[idx] - t), left, idx)
        ok = np.abs(pts[idx] - t) <= 1e-12 * np.maximum(1.0, np.abs(t))
        if not np.all(ok):
            bad = int(np.flatnonzero(~ok)[0])
            raise ValueError(f"weight undefined at point {t[bad]!r}")
        return vals[idx]

    def to_dict(self) -> dict[str, Any]:
        if self.points is None:
            return {"poly": list(self.poly)}
        return {"points": list(self.points), "values": list(self.values)}

    @classmethod
    def from_dict(cls, d: dict[str, Any] | float | None) -> WeightFunction:
        if d is None:
            return cls.constant()
        if isinstance(d, (int, float)):
            return cls.constant(float(d))
        if "points" in d:
            return cls.table(d["points"], d["values"])
        if "constant" in d:
            return cls.constant(float(d["constant"]))
        return cls(poly=tuple(d.get("poly", (1.0,))))


@dataclass(frozen=True)
class FunctionalPair:
    """The pair ``(mtilde, m)``; weights are ignored by the unweighted kinds."""

    mtilde_kind: MTildeKind = MTildeKind.IV_OUTCOME
    m_kind: MKind = MKind.AVERAGE_VALUE
    z_weight: WeightFunction = WeightFunction()
    x_weight: WeightFunction = WeightFunction()

    def __post_init__(self):
        object.__setattr__(self, "mtilde_kind", MTildeKind(self.mtilde_kind))
        object.__setattr__(self, "m_kind", MKind(self.m_kind))

    @classmethod
    def npiv(cls, x_weight: WeightFunction | None = None) -> FunctionalPair:
        """``mtilde = y g(z)``; ``m = h(x)`` or ``x_weight(x) h(x)`` when given."""
        if x_weight is None:
            return cls()
        return cls(MTildeKind.IV_OUTCOME, MKind.WEIGHTED_X, x_weight=x_weight)

    def mtilde_multiplier(self, data: Data) -> np.ndarray:
        if self.mtilde_kind is MTildeKind.IV_OUTCOME:
            return np.asarray(data.y)
        return self.z_weight(data.z)

    def m_multiplier(self, data: Data) -> np.ndarray:
        if self.m_kind is MKind.AVERAGE_VALUE:
            return np.ones(len(data))
        return self.x_weight(data.x)

    def multiplier(self, data: Data, domain) -> np.ndarray:
        """Multiplier of the functional acting on functions of ``domain``."""
        if Domain(domain) is Domain.Z:
            return self.mtilde_multiplier(data)
        return self.m_multiplier(data)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"mtilde": self.mtilde_kind.value, "m": self.m_kind.value}
        if self.mtilde_kind is MTildeKind.WEIGHTED_Z:
            out["z_weight"] = self.z_weight.to_dict()
        if self.m_kind is MKind.WEIGHTED_X:
            out["x_weight"] = self.x_weight.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any] | None) -> FunctionalPair:
        d = d or {}
        return cls(
            MTildeKind(d.get("mtilde", MTildeKind.IV_OUTCOME.value)),
            MKind(d.get("m", MKind.AVERAGE_VALUE.value)),
            z_weight=WeightFunction.from_dict(d.get("z_weight")),
            x_weight=WeightFunction.from_dict(d.get("x_weight")),
        )


def _check_domain(f: CoefVector, domain: Domain, name: str) -> None:
    if f.space.domain is not domain:
        raise BasisError(f"{name} must be a function of {domain.value}, got a {f.space.domain.value}-space vector")


def _one(w: Sample) -> Data:
    return Data(np.array([w[0]]), np.array([w[1]]), np.array([w[2]]))


def eval_mtilde(fp: FunctionalPair, w: Sample, g: CoefVector) -> float:
    _check_domain(g, Domain.Z, "g")
    d = _one(w)
    return float(fp.mtilde_multiplier(d)[0] * g(d.z)[0])


def eval_m(fp: FunctionalPair, w: Sample, h: CoefVector) -> float:
    _check_domain(h, Domain.X, "h")
    d = _one(w)
    return float(fp.m_multiplier(d)[0] * h(d.x)[0])


def mtilde_values(fp: FunctionalPair, data: Data, g: CoefVector) -> np.ndarray:
    """``mtilde(W_i; g)`` for every row of ``data``."""
    _check_domain(g, Domain.Z, "g")
    return fp.mtilde_multiplier(data) * g(data.z)


def m_values(fp: FunctionalPair, data: Data, h: CoefVector) -> np.ndarray:
    _check_domain(h, Domain.X, "h")
    return fp.m_multiplier(data) * h(data.x)


def moment_vector(fp: FunctionalPair, data, space) -> np.ndarray:
    """``E[m(W; phi_j)]`` over the basis of ``space``, under ``data``'s weights.

    The functional is ``mtilde`` for a Z-space and ``m`` for an X-space.
    """
    data = as_data(data)
    basis = space.design(data.points(space.domain))
    return basis.T @ (data.weights * fp.multiplier(data, space.domain))


def population_riesz(fp: FunctionalPair, pmf: JointPMF, space) -> CoefVector:
    """Strong Riesz representer of the functional on ``space`` under ``pmf``.

    Returns ``r_P`` for a Z-space and ``a_P`` for an X-space, by solving
    ``Gram c = moments``.
    """
    g = gram(space, Weighting.POPULATION, pmf)
    chol = cholesky_factor(g, f"population {space.domain.value}-Gram")
    mu = moment_vector(fp, pmf.as_data(), space)
    return CoefVector(space, linalg.cho_solve((chol, True), mu))
