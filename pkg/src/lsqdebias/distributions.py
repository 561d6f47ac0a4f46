"""Observations and exact finite-support joint distributions of (X, Y, Z)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .function_space import Domain

PROB_TOL = 1e-12


class Sample(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True, eq=False)
class Data:
    """A weighted collection of observations ``(x, y, z)``.

    Empirical samples carry uniform weights ``1/n``. A :class:`JointPMF`
    converts to a ``Data`` whose rows are the support cells, weighted by
    their probabilities, with ``y`` set to the conditional mean; since every
    learner is linear in ``Y`` this reproduces population moments exactly.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    weights: np.ndarray = field(default=None)
    population: bool = False

    def __post_init__(self):
        x, y, z = (np.asarray(a, dtype=float).reshape(-1) for a in (self.x, self.y, self.z))
        if not (x.size == y.size == z.size):
            raise ValueError("x, y, z must have equal length")
        for name, a in (("x", x), ("y", y), ("z", z)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite entries in {name}")
        if self.weights is None:
            w = np.full(x.size, 1.0 / x.size) if x.size else np.zeros(0)
        else:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.size != x.size or np.any(w < 0):
                raise ValueError("weights must be nonnegative with one entry per row")
            total = w.sum()
            if x.size and total <= 0:
                raise ValueError("weights sum to zero")
            w = w / total if x.size else w
        for name, a in (("x", x), ("y", y), ("z", z), ("weights", w)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return self.x.size

    def points(self, domain) -> np.ndarray:
        return self.x if Domain(domain) is Domain.X else self.z

    def expect(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))

    def subset(self, idx) -> Data:
        idx = np.asarray(idx)
        return Data(self.x[idx], self.y[idx], self.z[idx], self.weights[idx], self.population)

    @staticmethod
    def concat(parts: Sequence[Data]) -> Data:
        # pooled empirical folds are re-weighted by row count
        if any(p.population for p in parts):
            raise ValueError("cannot pool population data")
        return Data(
            np.concatenate([p.x for p in parts]),
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.z for p in parts]),
        )

    def samples(self) -> list[Sample]:
        return [Sample(float(a), float(b), float(c)) for a, b, c in zip(self.x, self.y, self.z)]


def as_data(source) -> Data:
    """Coerce a :class:`Data`, a :class:`JointPMF` or a sequence of samples."""
    if isinstance(source, Data):
        return source
    if isinstance(source, JointPMF):
        return source.as_data()
    rows = list(source)
    if not rows:
        return Data(np.zeros(0), np.zeros(0), np.zeros(0))
    arr = np.array([(s[0], s[1], s[2]) for s in rows], dtype=float)
    return Data(arr[:, 0], arr[:, 1], arr[:, 2])


@dataclass(frozen=True, eq=False)
class JointPMF:
    """Exact joint law of ``(X, Y, Z)`` on finite X and Z supports.

    All matrices are indexed ``[x_index, z_index]``. ``y_values`` holds
    ``E[Y | X=x, Z=z]`` and ``y_cond_var`` the conditional variance, which
    only matters when sampling.
    """

    x_support: np.ndarray
    z_support: np.ndarray
    prob: np.ndarray
    y_values: np.ndarray
    y_cond_var: np.ndarray = field(default=None)

    def __post_init__(self):
        xs = np.asarray(self.x_support, dtype=float).reshape(-1)
        zs = np.asarray(self.z_support, dtype=float).reshape(-1)
        shape = (xs.size, zs.size)
        p = np.asarray(self.prob, dtype=float)
        yv = np.asarray(self.y_values, dtype=float)
        yvar = np.zeros(shape) if self.y_cond_var is None else np.asarray(self.y_cond_var, dtype=float)
        if yvar.ndim == 0:
            yvar = np.full(shape, float(yvar))
        for name, a in (("prob", p), ("y_values", yv), ("y_cond_var", yvar)):
            if a.shape != shape:
                raise ValueError(f"{name} has shape {a.shape}, expected {shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
        for name, s in (("x_support", xs), ("z_support", zs)):
            if s.size == 0 or (s.size > 1 and not np.all(np.diff(s) > 0)):
                raise ValueError(f"{name} must be nonempty and strictly increasing")
        if np.any(p < 0):
            raise ValueError("prob has negative entries")
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"prob sums to {p.sum()!r}, not 1")
        if np.any(yvar < 0):
            raise ValueError("y_cond_var must be nonnegative")
        if np.any(p.sum(axis=1) <= 0) or np.any(p.sum(axis=0) <= 0):
            raise ValueError("zero-probability support atom; build with JointPMF.from_table to prune")
        for name, a in (("x_support", xs), ("z_support", zs), ("prob", p), ("y_values", yv), ("y_cond_var", yvar)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_table(cls, x_support, z_support, prob, y_values, y_cond_var=0.0) -> JointPMF:
        """Build a pmf, dropping support points with zero marginal mass."""
        xs = np.asarray(x_support, dtype=float)
        zs = np.asarray(z_support, dtype=float)
        p = np.asarray(prob, dtype=float)
        yv = np.asarray(y_values, dtype=float)
        yvar = np.broadcast_to(np.asarray(y_cond_var, dtype=float), p.shape)
        keep_x = p.sum(axis=1) > 0
        keep_z = p.sum(axis=0) > 0
        sel = np.ix_(keep_x, keep_z)
        return cls(xs[keep_x], zs[keep_z], p[sel], yv[sel], np.array(yvar[sel]))

    @property
    def p_x(self) -> np.ndarray:
        return self.prob.sum(axis=1)

    @property
    def p_z(self) -> np.ndarray:
        return self.prob.sum(axis=0)

    def marginal(self, domain) -> tuple[np.ndarray, np.ndarray]:
        if Domain(domain) is Domain.X:
            return self.x_support, self.p_x
        return self.z_support, self.p_z

    def as_data(self) -> Data:
        ix, iz = np.nonzero(self.prob > 0)
        return Data(
            self.x_support[ix],
            self.y_values[ix, iz],
            self.z_support[iz],
            self.prob[ix, iz],
            population=True,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "z", "prob", "y_mean", "y_var"])
        for i, x in enumerate(self.x_support):
            for j, z in enumerate(self.z_support):
                w.writerow([repr(float(x)), repr(float(z)), repr(float(self.prob[i, j])),
                            repr(float(self.y_values[i, j])), repr(float(self.y_cond_var[i, j]))])
        return buf.getvalue()


def data_from_rows(rows: Iterable[dict]) -> Data:
    """Build :class:`Data` from mappings with ``x``, ``y``, ``z`` keys (e.g. ``csv.DictReader``)."""
    xs, ys, zs = [], [], []
    for r in rows:
        xs.append(float(r["x"]))
        ys.append(float(r["y"]))
        zs.append(float(r["z"]))
    return Data(np.array(xs), np.array(ys), np.array(zs))
