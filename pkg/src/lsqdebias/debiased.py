"""Debiased estimation of the bilinear target with four-way sample splitting.

Fold roles per rotation: ``h``/``g`` are fit on the first fold, the
weak-norm Riesz representers on the second (plugging in the first-stage
fits), the four projections on the third, ``r``/``a`` on the union of the
first three, and the score is averaged over the fourth. Cross-fitting
rotates the roles through all four folds and averages.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Any

import numpy as np

from .distributions import Data, JointPMF, as_data
from .function_space import BasisSpec, Domain
from .functionals import FunctionalPair
from .learners import (
    default_lambda,
    minimax_dual,
    minimax_primary,
    minimax_weak_riesz,
    projection_ls,
    riesz_regression,
)
from .score import NuisanceTuple, score, score_values

__all__ = [
    "EstimateReport",
    "EstimatorConfig",
    "FoldError",
    "NuisanceTuple",
    "estimate",
    "fit_nuisances",
    "normal_quantile",
    "population_estimate",
    "score",
    "score_values",
    "split_indices",
]

N_FOLDS = 4
ROLES = ("primary-fit", "weak-riesz-fit", "projection-fit", "evaluation")


class FoldError(RuntimeError):
    """A learner failed inside one fold; the original error is ``__cause__``."""

    def __init__(self, rotation: int, role: str, fold: int, cause: Exception):
        super().__init__(f"rotation {rotation}, role {role} (fold {fold}): {type(cause).__name__}: {cause}")
        self.rotation = rotation
        self.role = role
        self.fold = fold


def normal_quantile(level: float) -> float:
    """Two-sided standard normal critical value for coverage ``level``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return NormalDist().inv_cdf(0.5 + level / 2)


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings for :func:`estimate`.

    ``lambdas`` may set any of ``h``, ``g``, ``alpha_h``, ``alpha_g``; missing
    ``h``/``g`` entries use :func:`~lsqdebias.learners.default_lambda` at
    the fold size with ``beta`` as the source exponent; missing ``alpha``
    entries use ``1 / n``.
    ``variance`` is ``"pooled"`` (scores centred at the overall estimate) or
    ``"per_fold"`` (each fold centred at its own estimate, then averaged).
    """

    hspace: BasisSpec
    gspace: BasisSpec
    fp: FunctionalPair = FunctionalPair()
    lambdas: dict = field(default_factory=dict)
    cross_fit: bool = True
    level: float = 0.95
    seed: int = 0
    beta: float = 1.0
    variance: str = "pooled"

    def __post_init__(self):
        if self.hspace.domain is not Domain.X or self.gspace.domain is not Domain.Z:
            raise ValueError("hspace must be an X-space and gspace a Z-space")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.variance not in ("pooled", "per_fold"):
            raise ValueError("variance must be 'pooled' or 'per_fold'")
        unknown = set(self.lambdas) - {"h", "g", "alpha_h", "alpha_g"}
        if unknown:
            raise ValueError(f"unknown lambda keys {sorted(unknown)}")
        for k, v in self.lambdas.items():
            if v is not None and not float(v) > 0:
                raise ValueError(f"lambda {k} must be positive")

    def lambda_for(self, name: str, n: int) -> float:
        v = self.lambdas.get(name)
        if v is not None:
            return float(v)
        if name in ("h", "g"):
            return default_lambda(n, self.beta)
        # weak-norm Riesz bias must vanish faster than lambda itself
        return 1.0 / n


@dataclass(frozen=True)
class EstimateReport:
    psi_hat: float
    std_error: float
    ci_low: float
    ci_high: float
    level: float
    n_eval: int
    per_fold: tuple = ()

    FIELDS = ("psi_hat", "std_error", "ci_low", "ci_high", "level", "n_eval", "per_fold")

    def csv_row(self) -> list[str]:
        folds = json.dumps([[float(p), float(v), int(n)] for p, v, n in self.per_fold])
        return [repr(float(self.psi_hat)), repr(float(self.std_error)), repr(float(self.ci_low)),
                repr(float(self.ci_high)), repr(float(self.level)), str(int(self.n_eval)), folds]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        w.writerow(self.csv_row())
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [
            f"estimate        {self.psi_hat:.6g}",
            f"std. error      {self.std_error:.6g}",
            f"{100 * self.level:g}% interval  [{self.ci_low:.6g}, {self.ci_high:.6g}]",
            f"n (evaluation)  {self.n_eval}",
        ]
        for i, (p, v, n) in enumerate(self.per_fold):
            lines.append(f"  rotation {i}: estimate {p:.6g}, variance {v:.6g}, n {n}")
        return "\n".join(lines) + "\n"


def split_indices(n: int, n_folds: int = N_FOLDS, seed=0) -> list[np.ndarray]:
    """Seeded random partition of ``range(n)`` into near-equal folds.

    The first ``n % n_folds`` folds receive one extra index.
    """
    if n_folds != N_FOLDS:
        raise ValueError("the estimator uses exactly four folds")
    if n < 2 * n_folds:
        raise ValueError(f"need at least {2 * n_folds} observations, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [n // n_folds + (k < n % n_folds) for k in range(n_folds)]
    bounds = np.cumsum([0, *sizes])
    return [np.sort(perm[bounds[k]:bounds[k + 1]]) for k in range(n_folds)]


def rotations(folds: list[np.ndarray], cross_fit: bool) -> list[tuple[int, ...]]:
    """Fold index assigned to each role, one tuple per rotation."""
    k = len(folds)
    count = k if cross_fit else 1
    return [tuple((r + j) % k for j in range(k)) for r in range(count)]


def fit_nuisances(d1, d2, d3, config: EstimatorConfig, d_riesz=None, _stage=None) -> NuisanceTuple:
    """Fit all ten nuisances on three independent samples.

    ``d_riesz`` defaults to the union of the three samples.
    """
    stage = _stage if _stage is not None else [0]
    H, G, fp = config.hspace, config.gspace, config.fp
    d1, d2, d3 = as_data(d1), as_data(d2), as_data(d3)
    stage[0] = 0
    h = minimax_primary(d1, H, G, fp, config.lambda_for("h", len(d1))).coef
    g = minimax_dual(d1, H, G, fp, config.lambda_for("g", len(d1))).coef
    stage[0] = 1
    alpha_h = minimax_weak_riesz(d2, H, G, g, config.lambda_for("alpha_h", len(d2))).coef
    alpha_g = minimax_weak_riesz(d2, H, G, h, config.lambda_for("alpha_g", len(d2))).coef
    stage[0] = 2
    xi = {
        "xi_h": projection_ls(d3, h, G),
        "xi_g": projection_ls(d3, g, H),
        "xi_alpha_h": projection_ls(d3, alpha_h, G),
        "xi_alpha_g": projection_ls(d3, alpha_g, H),
    }
    stage[0] = 0
    if d_riesz is None:
        d_riesz = d1 if d1.population else Data.concat([d1, d2, d3])
    r = riesz_regression(d_riesz, G, fp, "r")
    a = riesz_regression(d_riesz, H, fp, "a")
    return NuisanceTuple(h=h, g=g, alpha_h=alpha_h, alpha_g=alpha_g, r=r, a=a, **xi)


def _fit_rotation(data: Data, folds, roles: tuple[int, ...], rot: int, config: EstimatorConfig) -> NuisanceTuple:
    stage = [0]
    try:
        return fit_nuisances(*(data.subset(folds[k]) for k in roles[:3]), config, _stage=stage)
    except (np.linalg.LinAlgError, ValueError) as e:
        # r/a failures are reported against the first fold of the pooled union
        raise FoldError(rot, ROLES[stage[0]], roles[stage[0]], e) from e


def _report(psi: float, var: float, n: int, level: float, per_fold=()) -> EstimateReport:
    se = float(np.sqrt(max(var, 0.0) / n))
    z = normal_quantile(level)
    return EstimateReport(float(psi), se, psi - z * se, psi + z * se, float(level), int(n), tuple(per_fold))


def estimate(data, config: EstimatorConfig, nuisances: NuisanceTuple | None = None) -> EstimateReport:
    """Debiased point estimate, standard error and normal confidence interval.

    Parameters
    ----------
    data : Data or sequence of Sample
        The full sample; it is split into four folds internally.
    config : EstimatorConfig
    nuisances : NuisanceTuple, optional
        Frozen nuisances. When given nothing is fit or split and the score
        is averaged over all of ``data`` under its weights (a pmf's
        ``as_data()`` gives the exact population mean).

    Raises
    ------
    FoldError
        When a learner fails; carries the rotation, role and fold.
    """
    data = as_data(data)
    if nuisances is not None:
        chi = score_values(data, nuisances, config.fp)
        psi = data.expect(chi)
        var = data.expect((chi - psi) ** 2)
        n = 1 if data.population else len(data)
        return _report(psi, var, n, config.level, [(psi, var, len(data))])
    if data.population:
        raise ValueError("population data needs frozen nuisances")

    folds = split_indices(len(data), N_FOLDS, config.seed)
    per_fold, chis = [], []
    for rot, roles in enumerate(rotations(folds, config.cross_fit)):
        eta = _fit_rotation(data, folds, roles, rot, config)
        chi = score_values(data.subset(folds[roles[3]]), eta, config.fp)
        chis.append(chi)
        per_fold.append((float(chi.mean()), float(chi.var()), int(chi.size)))
    psi = float(np.mean([p for p, _, _ in per_fold]))
    n_eval = sum(n for _, _, n in per_fold)
    if config.variance == "pooled":
        var = float(np.mean((np.concatenate(chis) - psi) ** 2))
    else:
        var = float(np.mean([v for _, v, _ in per_fold]))
    return _report(psi, var, n_eval, config.level, per_fold)


def population_estimate(pmf: JointPMF, eta: NuisanceTuple, fp: FunctionalPair, level: float = 0.95) -> EstimateReport:
    """Exact population mean of the score; ``std_error`` is the per-observation ``sigma``."""
    data = pmf.as_data()
    chi = score_values(data, eta, fp)
    psi = data.expect(chi)
    var = data.expect((chi - psi) ** 2)
    return _report(psi, var, 1, level, [(psi, var, len(data))])


def config_to_dict(config: EstimatorConfig) -> dict[str, Any]:
    return {
        "hspace": config.hspace.to_dict(),
        "gspace": config.gspace.to_dict(),
        "functionals": config.fp.to_dict(),
        "lambdas": dict(config.lambdas),
        "cross_fit": config.cross_fit,
        "level": config.level,
        "seed": config.seed,
        "beta": config.beta,
        "variance": config.variance,
    }
