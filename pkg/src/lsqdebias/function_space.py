"""Finite linear sieves over the X and Z domains.

Every function handled by the package lives in one of these spaces and is
stored as a coefficient vector against the space's basis. Norms and inner
products always go through a weighted Gram matrix; the basis itself is never
orthonormalized.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from .distributions import Data, JointPMF

PSD_TOL = 1e-10
SYM_TOL = 1e-12
_MATCH_TOL = 1e-12


class BasisError(ValueError):
    """Invalid basis construction or evaluation outside the basis domain."""


class SingularGramError(np.linalg.LinAlgError):
    """A Gram matrix has a degenerate direction and cannot be factorized."""


class Domain(str, enum.Enum):
    X = "x"
    Z = "z"


class Weighting(str, enum.Enum):
    EMPIRICAL = "empirical"
    POPULATION = "population"


class BasisKind(str, enum.Enum):
    INDICATOR = "indicator"
    POLYNOMIAL = "polynomial"
    PIECEWISE_CONSTANT = "piecewise_constant"


@dataclass(frozen=True)
class BasisSpec:
    """A finite basis over one domain.

    Parameters
    ----------
    domain : Domain
        Which variable the functions act on.
    kind : BasisKind
        ``INDICATOR`` takes ``support`` (strictly increasing points, one
        one-hot function each; an empty support is the zero space),
        ``POLYNOMIAL`` takes ``degree`` (monomials ``1, t, ..., t**degree``)
        and ``PIECEWISE_CONSTANT`` takes ``breakpoints`` (bins
        ``(-inf, b1), [b1, b2), ..., [bk, inf)``).
    """

    domain: Domain
    kind: BasisKind
    support: tuple[float, ...] = ()
    degree: int = 0
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        object.__setattr__(self, "kind", BasisKind(self.kind))
        object.__setattr__(self, "support", tuple(float(s) for s in self.support))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if self.kind is BasisKind.INDICATOR:
            s = np.asarray(self.support, dtype=float)
            if not np.all(np.isfinite(s)):
                raise BasisError("indicator support must be finite")
            if s.size > 1 and not np.all(np.diff(s) > 0):
                raise BasisError("indicator support must be strictly increasing without duplicates")
        elif self.kind is BasisKind.POLYNOMIAL:
            if int(self.degree) != self.degree or self.degree < 0:
                raise BasisError(f"polynomial degree must be a nonnegative integer, got {self.degree}")
        else:
            b = np.asarray(self.breakpoints, dtype=float)
            if b.size > 1 and not np.all(np.diff(b) > 0):
                raise BasisError("breakpoints must be strictly increasing")

    @classmethod
    def indicator(cls, domain, support) -> BasisSpec:
        return cls(domain, BasisKind.INDICATOR, support=tuple(support))

    @classmethod
    def polynomial(cls, domain, degree: int) -> BasisSpec:
        return cls(domain, BasisKind.POLYNOMIAL, degree=int(degree))

    @classmethod
    def piecewise_constant(cls, domain, breakpoints) -> BasisSpec:
        return cls(domain, BasisKind.PIECEWISE_CONSTANT, breakpoints=tuple(breakpoints))

    @property
    def dimension(self) -> int:
        if self.kind is BasisKind.INDICATOR:
            return len(self.support)
        if self.kind is BasisKind.POLYNOMIAL:
            return self.degree + 1
        return len(self.breakpoints) + 1

    def design(self, points) -> np.ndarray:
        """Return the ``(n, dimension)`` matrix of basis values at ``points``."""
        t = np.atleast_1d(np.asarray(points, dtype=float))
        if t.ndim != 1:
            raise BasisError("points must be a 1-d array")
        if self.kind is BasisKind.INDICATOR:
            s = np.asarray(self.support)
            out = np.zeros((t.size, s.size))
            if s.size == 0:
                return out
            idx = np.clip(np.searchsorted(s, t), 0, s.size - 1)
            left = np.clip(idx - 1, 0, s.size - 1)
            # nearest of the two neighbours, then verify the match
            idx = np.where(np.abs(s[left] - t) < np.abs(s[idx] - t), left, idx)
            ok = np.abs(s[idx] - t) <= _MATCH_TOL * np.maximum(1.0, np.abs(t))
            if not np.all(ok):
                bad = int(np.flatnonzero(~ok)[0])
                raise BasisError(
                    f"point {t[bad]!r} at index {bad} is not in the indicator support "
                    f"of the {self.domain.value}-space"
                )
            out[np.arange(t.size), idx] = 1.0
            return out
        if not np.all(np.isfinite(t)):
            bad = int(np.flatnonzero(~np.isfinite(t))[0])
            raise BasisError(f"non-finite point at index {bad}")
        if self.kind is BasisKind.POLYNOMIAL:
            return np.vander(t, self.degree + 1, increasing=True)
        bins = np.searchsorted(np.asarray(self.breakpoints), t, side="right")
        out = np.zeros((t.size, self.dimension))
        out[np.arange(t.size), bins] = 1.0
        return out

    def is_saturated_for(self, support) -> bool:
        """True when the basis spans every function on the finite ``support``."""
        support = np.asarray(support, dtype=float)
        if support.size == 0:
            return True
        try:
            d = self.design(support)
        except BasisError:
            return False
        return np.linalg.matrix_rank(d) == support.size

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"domain": self.domain.value, "kind": self.kind.value}
        if self.kind is BasisKind.INDICATOR:
            out["support"] = list(self.support)
        elif self.kind is BasisKind.POLYNOMIAL:
            out["degree"] = self.degree
        else:
            out["breakpoints"] = list(self.breakpoints)
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> BasisSpec:
        kind = BasisKind(d["kind"])
        return cls(
            Domain(d["domain"]),
            kind,
            support=tuple(d.get("support", ())),
            degree=int(d.get("degree", 0)),
            breakpoints=tuple(d.get("breakpoints", ())),
        )


@dataclass(frozen=True, eq=False)
class CoefVector:
    """Coordinates of a function in ``space``."""

    space: BasisSpec
    coef: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coef, dtype=float).reshape(-1)
        if c.size != self.space.dimension:
            raise BasisError(
                f"coefficient vector has length {c.size}, space has dimension {self.space.dimension}"
            )
        if not np.all(np.isfinite(c)):
            raise BasisError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coef", c)

    @classmethod
    def zeros(cls, space: BasisSpec) -> CoefVector:
        return cls(space, np.zeros(space.dimension))

    def __call__(self, points) -> np.ndarray:
        return self.space.design(points) @ self.coef

    def __add__(self, other: CoefVector) -> CoefVector:
        _same_space(self.space, other.space)
        return CoefVector(self.space, self.coef + other.coef)

    def __sub__(self, other: CoefVector) -> CoefVector:
        _same_space(self.space, other.space)
        return CoefVector(self.space, self.coef - other.coef)

    def __mul__(self, c: float) -> CoefVector:
        return CoefVector(self.space, float(c) * self.coef)

    __rmul__ = __mul__

    def __neg__(self) -> CoefVector:
        return CoefVector(self.space, -self.coef)


def _same_space(a: BasisSpec, b: BasisSpec) -> None:
    if a != b:
        raise BasisError(f"basis mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Weighted second-moment matrix ``G[j, k] = E[phi_j phi_k]`` of a basis."""

    space: BasisSpec
    weighting: Weighting
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        d = self.space.dimension
        if m.shape != (d, d):
            raise BasisError(f"Gram matrix shape {m.shape} does not match dimension {d}")
        scale = max(float(np.max(np.abs(m), initial=0.0)), np.finfo(float).tiny)
        if np.max(np.abs(m - m.T), initial=0.0) > SYM_TOL * scale:
            raise BasisError("Gram matrix is not symmetric")
        if d:
            eig = np.linalg.eigvalsh(m)
            if eig[0] < -PSD_TOL * max(eig[-1], 0.0):
                raise BasisError(f"Gram matrix is not PSD (min eigenvalue {eig[0]:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def inner(self, u: CoefVector, v: CoefVector) -> float:
        _same_space(u.space, self.space)
        _same_space(v.space, self.space)
        return float(u.coef @ self.matrix @ v.coef)

    def norm(self, u: CoefVector) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))


def evaluate(space: BasisSpec, coef: CoefVector, point: float) -> float:
    """Value of the function ``coef`` at a single point."""
    _same_space(space, coef.space)
    return float(space.design([point])[0] @ coef.coef)


def design_matrix(space: BasisSpec, points) -> np.ndarray:
    return space.design(points)


def gram(space: BasisSpec, weighting, source: Data | JointPMF) -> GramMatrix:
    """Gram matrix of ``space`` under a sample or a population pmf.

    ``weighting`` selects how ``source`` is read: ``EMPIRICAL`` expects a
    :class:`~lsqdebias.distributions.Data` (or a sequence of samples) and
    ``POPULATION`` expects a :class:`~lsqdebias.distributions.JointPMF`,
    whose marginal over ``space.domain`` supplies the weights.
    """
    from .distributions import JointPMF, as_data

    weighting = Weighting(weighting)
    if weighting is Weighting.POPULATION:
        if not isinstance(source, JointPMF):
            raise TypeError("population weighting needs a JointPMF")
        pts, w = source.marginal(space.domain)
    else:
        data = as_data(source)
        if len(data) == 0:
            raise ValueError("empty sample")
        pts, w = data.points(space.domain), data.weights
    d = space.design(pts)
    m = d.T @ (w[:, None] * d)
    return GramMatrix(space, weighting, 0.5 * (m + m.T))


def clamped_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition with tiny negative eigenvalues set to zero."""
    eig, vec = np.linalg.eigh(matrix)
    top = max(float(eig[-1]) if eig.size else 0.0, 0.0)
    eig = np.where((eig < 0) & (eig > -PSD_TOL * top), 0.0, eig)
    return eig, vec


def cholesky_factor(g: GramMatrix | np.ndarray, what: str = "Gram matrix") -> np.ndarray:
    """Lower Cholesky factor of a population Gram matrix.

    Raises
    ------
    SingularGramError
        If some basis direction carries (numerically) zero mass.
    """
    m = g.matrix if isinstance(g, GramMatrix) else np.asarray(g, dtype=float)
    if m.shape[0] == 0:
        return np.zeros((0, 0))
    eig, _ = clamped_eigh(m)
    if eig[0] <= PSD_TOL * eig[-1]:
        raise SingularGramError(
            f"{what} is singular (eigenvalue ratio {eig[0] / max(eig[-1], 1e-300):.2e}); "
            "prune zero-probability support points or reduce the basis"
        )
    return np.linalg.cholesky(m)
