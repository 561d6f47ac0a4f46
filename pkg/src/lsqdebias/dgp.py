"""Synthetic data-generating processes with exactly known population truth.

A :class:`SpectralDesign` builds a joint pmf whose conditional-expectation
operator has a prescribed spectrum. For marginals ``p_X``, ``p_Z`` and
L2-orthonormal, mean-zero functions ``f_k`` (on x) and ``e_k`` (on z),

    P(x, z) = p_X(x) p_Z(z) [1 + sum_k s_k f_k(x) e_k(z)]

has operator singular values ``1`` (the constants) and ``s_k``, with the
marginals untouched. The ``f_k``/``e_k`` are weighted Helmert contrasts,
and pairing the largest ``s_k`` with the contrast of widest support keeps
every cell nonnegative whenever ``0 <= s_k <= 1`` on square supports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .distributions import Data, JointPMF
from .function_space import BasisSpec, Domain
from .functionals import FunctionalPair, MKind, WeightFunction
from .oracle import OperatorMatrix, OracleSolution, build_operator, solve_oracle


class DGPError(ValueError):
    pass


class InfeasibleSpectrumError(DGPError):
    pass


@dataclass(frozen=True)
class ExplicitPMF:
    prob: tuple
    y_values: tuple
    y_cond_var: Any = 0.0
    functionals: FunctionalPair = FunctionalPair()


@dataclass(frozen=True)
class SpectralDesign:
    """Operator spectrum plus source exponent and kernel masses.

    ``singular_values`` lists the non-constant directions only; the constant
    function always has singular value 1.
    """

    singular_values: tuple[float, ...]
    coef_decay_beta: float = 1.0
    r_perp_mass: float = 0.0
    a_perp_mass: float = 0.0
    noise_sd: float = 1.0
    p_x: tuple[float, ...] | None = None
    p_z: tuple[float, ...] | None = None


@dataclass(frozen=True)
class DGPSpec:
    name: str
    x_support: tuple[float, ...]
    z_support: tuple[float, ...]
    construction: ExplicitPMF | SpectralDesign
    seed_domain: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x_support", tuple(float(v) for v in self.x_support))
        object.__setattr__(self, "z_support", tuple(float(v) for v in self.z_support))
        c = self.construction
        if isinstance(c, SpectralDesign):
            s = np.asarray(c.singular_values, dtype=float)
            k_max = min(len(self.x_support), len(self.z_support)) - 1
            if s.size > k_max:
                raise DGPError(f"{s.size} singular values need supports of size >= {s.size + 1}")
            if np.any(s <= 0) or np.any(np.diff(s) > 0):
                raise DGPError("singular values must be positive and non-increasing")
            if c.coef_decay_beta <= 0:
                raise DGPError("coef_decay_beta must be positive")
            if min(c.r_perp_mass, c.a_perp_mass, c.noise_sd) < 0:
                raise DGPError("perp masses and noise_sd must be nonnegative")
            rank = s.size + 1
            if c.r_perp_mass > 0 and len(self.z_support) <= rank:
                raise DGPError("r_perp_mass > 0 needs a z-support larger than the operator rank")
            if c.a_perp_mass > 0 and len(self.x_support) <= rank:
                raise DGPError("a_perp_mass > 0 needs an x-support larger than the operator rank")

    def to_dict(self) -> dict[str, Any]:
        c = self.construction
        out: dict[str, Any] = {
            "name": self.name,
            "x_support": list(self.x_support),
            "z_support": list(self.z_support),
            "seed_domain": self.seed_domain,
        }
        if isinstance(c, SpectralDesign):
            sd: dict[str, Any] = {
                "singular_values": list(c.singular_values),
                "coef_decay_beta": c.coef_decay_beta,
                "r_perp_mass": c.r_perp_mass,
                "a_perp_mass": c.a_perp_mass,
                "noise_sd": c.noise_sd,
            }
            if c.p_x is not None:
                sd["p_x"] = list(c.p_x)
            if c.p_z is not None:
                sd["p_z"] = list(c.p_z)
            out["spectral"] = sd
        else:
            out["explicit"] = {
                "prob": np.asarray(c.prob).tolist(),
                "y_values": np.asarray(c.y_values).tolist(),
                "y_cond_var": np.asarray(c.y_cond_var).tolist(),
                "functionals": c.functionals.to_dict(),
            }
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DGPSpec:
        if "preset" in d:
            kwargs = {k: v for k, v in d.items() if k != "preset"}
            return PRESETS[d["preset"]](**kwargs)
        if "spectral" in d:
            s = d["spectral"]
            c: ExplicitPMF | SpectralDesign = SpectralDesign(
                singular_values=tuple(float(v) for v in s["singular_values"]),
                coef_decay_beta=float(s.get("coef_decay_beta", 1.0)),
                r_perp_mass=float(s.get("r_perp_mass", 0.0)),
                a_perp_mass=float(s.get("a_perp_mass", 0.0)),
                noise_sd=float(s.get("noise_sd", 1.0)),
                p_x=tuple(s["p_x"]) if s.get("p_x") is not None else None,
                p_z=tuple(s["p_z"]) if s.get("p_z") is not None else None,
            )
        elif "explicit" in d:
            e = d["explicit"]
            c = ExplicitPMF(
                prob=_as_tuple(e["prob"]),
                y_values=_as_tuple(e["y_values"]),
                y_cond_var=_as_tuple(e.get("y_cond_var", 0.0)),
                functionals=FunctionalPair.from_dict(e.get("functionals")),
            )
        else:
            raise DGPError("dgp needs one of 'preset', 'spectral' or 'explicit'")
        return cls(d.get("name", "dgp"), tuple(d["x_support"]), tuple(d["z_support"]), c,
                   int(d.get("seed_domain", 0)))


def _as_tuple(v):
    a = np.asarray(v, dtype=float)
    return float(a) if a.ndim == 0 else tuple(map(tuple, a)) if a.ndim == 2 else tuple(a)


@dataclass(frozen=True, eq=False)
class RealizedDGP:
    """A realized pmf with its functional, saturated bases and metadata."""

    spec: DGPSpec
    pmf: JointPMF
    functionals: FunctionalPair
    metadata: dict = field(default_factory=dict)

    @cached_property
    def hspace(self) -> BasisSpec:
        return BasisSpec.indicator(Domain.X, self.pmf.x_support)

    @cached_property
    def gspace(self) -> BasisSpec:
        return BasisSpec.indicator(Domain.Z, self.pmf.z_support)

    @cached_property
    def operator(self) -> OperatorMatrix:
        return build_operator(self.pmf, self.hspace, self.gspace)

    @cached_property
    def oracle(self) -> OracleSolution:
        return solve_oracle(self.operator, self.pmf, self.functionals)

    @property
    def beta(self) -> float:
        return float(self.metadata.get("beta", 1.0))

    def sample(self, n: int, seed) -> Data:
        return sample(self.pmf, n, seed)


def helmert_contrasts(p) -> np.ndarray:
    """Mean-zero, ``L2(p)``-orthonormal contrasts; column ``k-1`` lives on the first ``k+1`` points."""
    p = np.asarray(p, dtype=float)
    m = p.size
    out = np.zeros((m, max(m - 1, 0)))
    cum = np.cumsum(p)
    for k in range(1, m):
        s = cum[k - 1]
        c = 1.0 / np.sqrt(s * (1.0 + s / p[k]))
        out[:k, k - 1] = c
        out[k, k - 1] = -c * s / p[k]
    return out


def _marginal(p, m: int, name: str) -> np.ndarray:
    if p is None:
        return np.full(m, 1.0 / m)
    p = np.asarray(p, dtype=float)
    if p.size != m or np.any(p <= 0) or abs(p.sum() - 1) > 1e-12:
        raise DGPError(f"{name} must be a strictly positive probability vector of length {m}")
    return p


def _realize_spectral(spec: DGPSpec) -> RealizedDGP:
    c: SpectralDesign = spec.construction
    xs, zs = np.asarray(spec.x_support), np.asarray(spec.z_support)
    mx, mz = xs.size, zs.size
    px, pz = _marginal(c.p_x, mx, "p_x"), _marginal(c.p_z, mz, "p_z")
    s = np.asarray(c.singular_values, dtype=float)
    K = s.size
    if np.any(s > 1):
        raise InfeasibleSpectrumError(
            f"singular values {s.tolist()} exceed 1; a conditional expectation is a contraction"
        )
    fx_all, fz_all = helmert_contrasts(px), helmert_contrasts(pz)
    # widest contrasts carry the largest singular values
    fx = fx_all[:, mx - 2 - np.arange(K)] if K else np.zeros((mx, 0))
    fz = fz_all[:, mz - 2 - np.arange(K)] if K else np.zeros((mz, 0))
    prob = np.outer(px, pz) * (1.0 + fx @ (s[:, None] * fz.T))
    if prob.min() < -1e-14:
        raise InfeasibleSpectrumError(
            f"target spectrum {s.tolist()} not realizable with these marginals: "
            f"minimum cell {prob.min():.3e} < 0"
        )
    prob = np.clip(prob, 0.0, None)
    prob /= prob.sum()

    beta = float(c.coef_decay_beta)
    h_dag = 1.0 + fx @ s**beta
    a_par = 1.0 + fx @ s ** (beta + 1)
    r_perp = np.zeros(mz)
    a_perp = np.zeros(mx)
    if c.r_perp_mass > 0:
        r_perp = c.r_perp_mass * fz_all[:, mz - 2 - K]
    if c.a_perp_mass > 0:
        a_perp = c.a_perp_mass * fx_all[:, mx - 2 - K]
    y_values = h_dag[:, None] + r_perp[None, :]
    pmf = JointPMF.from_table(xs, zs, prob, y_values, np.full((mx, mz), c.noise_sd**2))
    if pmf.prob.shape != (mx, mz):
        raise InfeasibleSpectrumError("realized pmf lost a support atom")
    fp = FunctionalPair(m_kind=MKind.WEIGHTED_X, x_weight=WeightFunction.table(xs, a_par + a_perp))
    meta = {
        "name": spec.name,
        "beta": beta,
        "r_perp_mass": c.r_perp_mass,
        "a_perp_mass": c.a_perp_mass,
        "singular_values": [1.0, *s.tolist()],
        "noise_sd": c.noise_sd,
    }
    return RealizedDGP(spec, pmf, fp, meta)


def realize(spec: DGPSpec) -> RealizedDGP:
    """Turn a :class:`DGPSpec` into an exact pmf and functional pair."""
    c = spec.construction
    if isinstance(c, SpectralDesign):
        return _realize_spectral(spec)
    pmf = JointPMF.from_table(spec.x_support, spec.z_support, c.prob, c.y_values, c.y_cond_var)
    return RealizedDGP(spec, pmf, c.functionals, {"name": spec.name, "beta": 1.0})


def sample(pmf: JointPMF, n: int, seed) -> Data:
    """``n`` i.i.d. draws with Gaussian noise around ``E[Y | X, Z]``."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    rng = np.random.default_rng(seed)
    flat = pmf.prob.ravel()
    cells = rng.choice(flat.size, size=int(n), p=flat / flat.sum())
    ix, iz = np.unravel_index(cells, pmf.prob.shape)
    sd = np.sqrt(pmf.y_cond_var[ix, iz])
    y = pmf.y_values[ix, iz] + sd * rng.standard_normal(int(n))
    return Data(pmf.x_support[ix], y, pmf.z_support[iz])


# ---------------------------------------------------------------- presets

def identity_dgp(noise_sd: float = 0.0) -> DGPSpec:
    """X = Z uniform on {0, 1} and Y = X (plus optional noise)."""
    return DGPSpec(
        "identity", (0.0, 1.0), (0.0, 1.0),
        ExplicitPMF(((0.5, 0.0), (0.0, 0.5)), ((0.0, 0.0), (1.0, 1.0)), noise_sd**2),
    )


def table_3x2_dgp() -> DGPSpec:
    """X in {0,1,2}, Z in {0,1} with a fixed joint table and Y = X."""
    return DGPSpec(
        "table_3x2", (0.0, 1.0, 2.0), (0.0, 1.0),
        ExplicitPMF(((0.2, 0.1), (0.1, 0.2), (0.2, 0.2)),
                    ((0.0, 0.0), (1.0, 1.0), (2.0, 2.0))),
    )


def exact_solution_dgp(noise_sd: float = 1.0, beta: float = 1.0) -> DGPSpec:
    return DGPSpec("exact_solution", (0, 1, 2), (0, 1, 2, 3),
                   SpectralDesign((0.7, 0.4), beta, 0.0, 0.0, noise_sd))


def no_solution_dgp(r_perp_mass: float = 0.5, noise_sd: float = 1.0, beta: float = 1.0) -> DGPSpec:
    """``T h = r_P`` has no solution: ``r_P`` has mass ``r_perp_mass`` in ker T*."""
    return DGPSpec("no_solution", (0, 1, 2), (0, 1, 2, 3),
                   SpectralDesign((0.7, 0.4), beta, r_perp_mass, 0.0, noise_sd))


def weak_identification_dgp(a_perp_mass: float = 0.5, noise_sd: float = 1.0, beta: float = 1.0) -> DGPSpec:
    """``a_P`` has mass ``a_perp_mass`` in ker T, so ``T* g = a_P`` has no solution."""
    return DGPSpec("weak_identification", (0, 1, 2, 3), (0, 1, 2),
                   SpectralDesign((0.7, 0.4), beta, 0.0, a_perp_mass, noise_sd))


def source_dgp(beta: float, n_values: int = 6, s_max: float = 0.9, s_min: float = 3e-4,
               noise_sd: float = 1.0) -> DGPSpec:
    """Geometric spectrum for Tikhonov-rate experiments."""
    s = tuple(np.geomspace(s_max, s_min, n_values).tolist())
    support = tuple(range(n_values + 1))
    return DGPSpec(f"source_beta_{beta:g}", support, support,
                   SpectralDesign(s, beta, 0.0, 0.0, noise_sd))


PRESETS = {
    "identity": identity_dgp,
    "table_3x2": table_3x2_dgp,
    "exact_solution": exact_solution_dgp,
    "no_solution": no_solution_dgp,
    "weak_identification": weak_identification_dgp,
    "source": source_dgp,
}
