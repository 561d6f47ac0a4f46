"""Experiment runners behind the command line.

Each runner takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentResult`: a table for ``results.csv``, the lines of
``summary.txt`` and an optional plotting callback. Every replication draws
its seeds from ``SeedSequence(seed).spawn``, so a rerun with the same
config reproduces the table byte for byte.
"""

from __future__ import annotations

import csv
import enum
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from .debiased import EstimatorConfig, estimate
from .distributions import Data, data_from_rows
from .dgp import DGPError, DGPSpec, RealizedDGP, realize
from .function_space import BasisError, BasisSpec, CoefVector, Domain
from .functionals import FunctionalPair
from .learners import default_lambda, minimax_primary, projection_ls, riesz_regression
from .oracle import Side, bias_identity_check, tikhonov_path
from .score import NuisanceTuple


class ConfigError(ValueError):
    """The experiment config is missing, malformed or inconsistent."""


class Experiment(str, enum.Enum):
    ORACLE = "oracle"
    BIAS_IDENTITY = "bias-identity"
    TIKHONOV_RATES = "tikhonov-rates"
    LEARNER_RATES = "learner-rates"
    COVERAGE = "coverage"
    ESTIMATE = "estimate"


SAMPLING = (Experiment.LEARNER_RATES, Experiment.COVERAGE)

DEFAULTS: dict[str, Any] = {
    "reps": 100,
    "seed": 0,
    "out_dir": "results",
    "lambda_grid": np.geomspace(1e-6, 1e-1, 11).tolist(),
}
DEFAULT_N_GRID = {
    Experiment.LEARNER_RATES: [500, 1000, 2000, 4000, 8000],
    Experiment.COVERAGE: [2000],
    Experiment.ESTIMATE: [2000],
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment
    dgp: DGPSpec | None
    estimator: dict = field(default_factory=dict)
    reps: int = 100
    n_grid: tuple[int, ...] = ()
    lambda_grid: tuple[float, ...] = ()
    seed: int = 0
    out_dir: Path = Path("results")
    data_path: Path | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.experiment in SAMPLING and not self.n_grid:
            raise ConfigError(f"{self.experiment.value} needs a nonempty n_grid")
        if any(n < 1 for n in self.n_grid):
            raise ConfigError("n_grid entries must be positive")
        if any(not lam > 0 for lam in self.lambda_grid):
            raise ConfigError("lambda_grid entries must be positive")
        if self.dgp is None and not (self.experiment is Experiment.ESTIMATE and self.data_path):
            raise ConfigError("a dgp section is required (estimate may use --data instead)")


def parse_config(raw: dict, experiment=None, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a config mapping; ``overrides`` replaces top-level scalars."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    raw = {**raw, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    known = {"experiment", "dgp", "estimator", "reps", "n_grid", "lambda_grid", "seed", "out_dir", "data"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        exp = Experiment(experiment or raw.get("experiment", ""))
    except ValueError:
        raise ConfigError(f"unknown experiment {raw.get('experiment')!r}; choose from "
                          f"{[e.value for e in Experiment]}") from None
    if experiment and raw.get("experiment") not in (None, exp.value):
        raise ConfigError(f"config is for {raw['experiment']!r} but {exp.value!r} was requested")
    try:
        dgp = DGPSpec.from_dict(raw["dgp"]) if raw.get("dgp") is not None else None
        est = raw.get("estimator") or {}
        if not isinstance(est, dict):
            raise ConfigError("estimator must be a mapping")
        return ExperimentConfig(
            experiment=exp,
            dgp=dgp,
            estimator=dict(est),
            reps=int(raw.get("reps", DEFAULTS["reps"])),
            n_grid=tuple(int(n) for n in raw.get("n_grid", DEFAULT_N_GRID.get(exp, ()))),
            lambda_grid=tuple(float(v) for v in raw.get("lambda_grid", DEFAULTS["lambda_grid"])),
            seed=int(raw.get("seed", DEFAULTS["seed"])),
            out_dir=Path(raw.get("out_dir", DEFAULTS["out_dir"])),
            data_path=Path(raw["data"]) if raw.get("data") else None,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid config: {type(e).__name__}: {e}") from e


def load_config(path, experiment=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a YAML config file (see the README for the grammar)."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    return parse_config(raw, experiment, overrides)


@dataclass
class ExperimentResult:
    header: list[str]
    rows: list[list]
    summary: list[str]
    plot: Callable | None = None
    extra_files: dict[str, str] = field(default_factory=dict)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ------------------------------------------------------------- helpers

def _seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(count)


def _space(d, domain: Domain) -> BasisSpec:
    d = dict(d)
    d.setdefault("domain", domain.value)
    spec = BasisSpec.from_dict(d)
    if spec.domain is not domain:
        raise ConfigError(f"basis given for the {domain.value}-side lives on {spec.domain.value}")
    return spec


def estimator_config(cfg: ExperimentConfig, realized: RealizedDGP | None, seed: int = 0) -> EstimatorConfig:
    est = cfg.estimator
    try:
        if "hspace" in est:
            hspace = _space(est["hspace"], Domain.X)
        elif realized is not None:
            hspace = realized.hspace
        else:
            raise ConfigError("estimator.hspace is required without a dgp")
        if "gspace" in est:
            gspace = _space(est["gspace"], Domain.Z)
        elif realized is not None:
            gspace = realized.gspace
        else:
            raise ConfigError("estimator.gspace is required without a dgp")
        if "functionals" in est:
            fp = FunctionalPair.from_dict(est["functionals"])
        else:
            fp = realized.functionals if realized is not None else FunctionalPair()
        beta = est.get("beta", realized.beta if realized is not None else 1.0)
        return EstimatorConfig(
            hspace, gspace, fp,
            lambdas=dict(est.get("lambdas") or {}),
            cross_fit=bool(est.get("cross_fit", True)),
            level=float(est.get("level", 0.95)),
            seed=seed,
            beta=float(beta),
            variance=str(est.get("variance", "pooled")),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid estimator section: {e}") from e


def _warn_unsaturated(config: EstimatorConfig, realized: RealizedDGP) -> None:
    for space, support in ((config.hspace, realized.pmf.x_support), (config.gspace, realized.pmf.z_support)):
        if not space.is_saturated_for(support):
            warnings.warn(
                f"{space.domain.value}-basis does not span all functions on the support; "
                "the oracle refers to the saturated indicator basis",
                stacklevel=3,
            )


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _random_tuple(eta: NuisanceTuple, rng: np.random.Generator, scale: float) -> NuisanceTuple:
    return eta.replace(**{
        name: v + CoefVector(v.space, scale * rng.standard_normal(v.space.dimension))
        for name, v in eta.items()
    })


# ------------------------------------------------------------- runners

def run_oracle(cfg: ExperimentConfig, realized: RealizedDGP) -> ExperimentResult:
    orc = realized.oracle
    rows = list(csv.reader(io.StringIO(orc.to_csv())))
    s = ", ".join(f"{v:.6g}" for v in orc.singular_values)
    summary = [
        f"dgp: {realized.spec.name}",
        f"Psi = {orc.psi!r}",
        f"||r_perp|| = {orc.r_perp_norm!r}",
        f"||a_perp|| = {orc.a_perp_norm!r}",
        f"exact primary solution: {orc.exact_primary_solution}",
        f"exact dual solution: {orc.exact_dual_solution}",
        f"rank: {orc.rank}",
        f"singular values: {s}",
        f"source condition violated: {orc.source_condition_violated}",
    ]
    def plot(ax):
        ax.bar(range(orc.singular_values.size), orc.singular_values)
        ax.set_xlabel("index")
        ax.set_ylabel("singular value")

    return ExperimentResult(rows[0], rows[1:], summary, plot,
                            extra_files={"pmf.csv": realized.pmf.to_csv(), "oracle.csv": orc.to_csv()})


def run_bias_identity(cfg: ExperimentConfig, realized: RealizedDGP, scale: float = 0.5) -> ExperimentResult:
    op, orc = realized.operator, realized.oracle
    base = orc.nuisances()
    rows = []
    for rep, ss in enumerate(_seeds(cfg.seed, cfg.reps)):
        eta = _random_tuple(base, np.random.default_rng(ss), scale)
        b = bias_identity_check(op, realized.pmf, realized.functionals, eta, orc)
        rows.append([rep, b.lhs, b.termA, b.termB, b.termC, b.residual])
    worst = max(r[-1] for r in rows)
    summary = [
        f"dgp: {realized.spec.name}",
        f"perturbations: {cfg.reps} (coefficient noise sd {scale:g})",
        f"max residual = {worst!r}",
    ]
    def plot(ax):
        lhs = [r[1] for r in rows]
        ax.scatter(lhs, [r[2] + r[3] + r[4] for r in rows], s=8)
        ax.set_xlabel("score bias (exact summation)")
        ax.set_ylabel("A + B + C")

    return ExperimentResult(["rep", "lhs", "termA", "termB", "termC", "residual"], rows, summary, plot)


def tikhonov_errors(realized: RealizedDGP, lambdas) -> dict[str, np.ndarray]:
    """Strong and weak squared Tikhonov bias for ``h`` and ``g`` along ``lambdas``."""
    op, orc = realized.operator, realized.oracle
    out: dict[str, list] = {"h_strong": [], "h_weak": [], "g_strong": [], "g_weak": []}
    for h in tikhonov_path(op, orc.r_P, lambdas, Side.PRIMAL):
        d = h - orc.h_dag
        out["h_strong"].append(op.norm(d) ** 2)
        out["h_weak"].append(op.norm(op.apply(d)) ** 2)
    for g in tikhonov_path(op, orc.a_P, lambdas, Side.DUAL):
        d = g - orc.g_dag
        out["g_strong"].append(op.norm(d) ** 2)
        out["g_weak"].append(op.norm(op.adjoint(d)) ** 2)
    return {k: np.asarray(v) for k, v in out.items()}


def run_tikhonov_rates(cfg: ExperimentConfig, realized: RealizedDGP) -> ExperimentResult:
    lambdas = np.asarray(cfg.lambda_grid, dtype=float)
    err = tikhonov_errors(realized, lambdas)
    cols = list(err)
    rows = [[lam, *(err[c][i] for c in cols)] for i, lam in enumerate(lambdas)]
    beta = realized.beta
    summary = [f"dgp: {realized.spec.name}", f"beta = {beta:g}"]
    for c in cols:
        target = min(beta, 2.0) if c.endswith("strong") else min(beta + 1.0, 2.0)
        y = err[c]
        if np.all(y > 0):
            summary.append(f"slope {c} = {_loglog_slope(lambdas, y):.4f} (target {target:g})")
        else:
            summary.append(f"slope {c} = undefined (zero bias)")

    def plot(ax):
        for c in cols:
            if np.all(err[c] > 0):
                ax.loglog(lambdas, err[c], marker="o", label=c)
        ax.set_xlabel("lambda")
        ax.set_ylabel("squared Tikhonov bias")
        ax.legend()

    return ExperimentResult(["lambda", *cols], rows, summary, plot)


def learner_errors(realized: RealizedDGP, data: Data, lam: float) -> dict[str, float]:
    """Squared population errors of the primary, projection and Riesz learners on one sample."""
    op, orc, fp = realized.operator, realized.oracle, realized.functionals
    H, G = realized.hspace, realized.gspace
    h = minimax_primary(data, H, G, fp, lam).coef
    xi = projection_ls(data, orc.h_dag, G)
    r = riesz_regression(data, G, fp, "r")
    return {
        "h_weak": op.norm(op.apply(h - orc.h_dag)) ** 2,
        "h_strong": op.norm(h - orc.h_dag) ** 2,
        "xi": op.norm(xi - orc.xi_h) ** 2,
        "r": op.norm(r - orc.r_P) ** 2,
    }


def run_learner_rates(cfg: ExperimentConfig, realized: RealizedDGP) -> ExperimentResult:
    lam_cfg = (cfg.estimator.get("lambdas") or {}).get("h")
    beta = float(cfg.estimator.get("beta", realized.beta))
    seeds = _seeds(cfg.seed, len(cfg.n_grid))
    cols = ["h_weak", "h_strong", "xi", "r"]
    rows = []
    for n, ss in zip(cfg.n_grid, seeds):
        lam = float(lam_cfg) if lam_cfg is not None else default_lambda(n, beta)
        for rep, child in enumerate(ss.spawn(cfg.reps)):
            e = learner_errors(realized, realized.sample(n, child), lam)
            rows.append([n, rep, lam, *(e[c] for c in cols)])
    table = np.array([r[3:] for r in rows], dtype=float)
    ns = np.array([r[0] for r in rows])
    medians = {c: [float(np.median(table[ns == n, j])) for n in cfg.n_grid] for j, c in enumerate(cols)}
    summary = [f"dgp: {realized.spec.name}", f"reps per n: {cfg.reps}", "median squared errors:"]
    for c in cols:
        m = medians[c]
        dec = all(b < a for a, b in zip(m, m[1:]))
        summary.append(f"  {c}: " + ", ".join(f"{v:.4g}" for v in m) + f"  strictly decreasing: {dec}")

    def plot(ax):
        for c in cols:
            ax.loglog(cfg.n_grid, medians[c], marker="o", label=c)
        ax.set_xlabel("n")
        ax.set_ylabel("median squared error")
        ax.legend()

    return ExperimentResult(["n", "rep", "lambda", *cols], rows, summary, plot)


def run_coverage(cfg: ExperimentConfig, realized: RealizedDGP) -> ExperimentResult:
    psi = realized.oracle.psi
    base = estimator_config(cfg, realized)
    _warn_unsaturated(base, realized)
    rows = []
    for n, ss in zip(cfg.n_grid, _seeds(cfg.seed, len(cfg.n_grid))):
        for rep, child in enumerate(ss.spawn(cfg.reps)):
            sample_seed, split_seed = (int(v) for v in child.generate_state(2))
            data = realized.sample(n, sample_seed)
            config = estimator_config(cfg, realized, seed=split_seed)
            r = estimate(data, config)
            rows.append([n, rep, sample_seed, split_seed, r.psi_hat, r.std_error,
                         r.ci_low, r.ci_high, r.ci_low <= psi <= r.ci_high])
    cov = {n: float(np.mean([r[-1] for r in rows if r[0] == n])) for n in cfg.n_grid}
    summary = [f"dgp: {realized.spec.name}", f"Psi = {psi!r}", f"level = {base.level:g}",
               f"reps per n: {cfg.reps}"]
    for n in cfg.n_grid:
        z = [(r[4] - psi) / r[5] for r in rows if r[0] == n and r[5] > 0]
        summary.append(f"n = {n}: coverage = {cov[n]:.4f}, mean z = {np.mean(z):.3f}, sd z = {np.std(z):.3f}")

    def plot(ax):
        ax.bar([str(n) for n in cfg.n_grid], [cov[n] for n in cfg.n_grid])
        ax.axhline(base.level, color="k", linestyle="--")
        ax.set_ylim(0, 1)
        ax.set_xlabel("n")
        ax.set_ylabel("empirical coverage")

    header = ["n", "rep", "sample_seed", "split_seed", "psi_hat", "std_error", "ci_low", "ci_high", "covered"]
    return ExperimentResult(header, rows, summary, plot)


def read_data_csv(path) -> Data:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if not reader.fieldnames or not {"x", "y", "z"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: data CSV needs columns x, y, z")
        try:
            return data_from_rows(reader)
        except ValueError as e:
            raise ConfigError(f"{path}: {e}") from e


def run_estimate(cfg: ExperimentConfig, realized: RealizedDGP | None) -> ExperimentResult:
    ss = _seeds(cfg.seed, 1)[0]
    sample_seed, split_seed = (int(v) for v in ss.generate_state(2))
    config = estimator_config(cfg, realized, seed=split_seed)
    if cfg.data_path is not None:
        data = read_data_csv(cfg.data_path)
        source = str(cfg.data_path)
    else:
        data = realized.sample(cfg.n_grid[0], sample_seed)
        source = f"{realized.spec.name} sample, n = {cfg.n_grid[0]}"
    if realized is not None:
        _warn_unsaturated(config, realized)
    r = estimate(data, config)
    summary = [f"data: {source}", *r.to_text().rstrip("\n").split("\n")]
    if realized is not None:
        summary.append(f"true Psi  {realized.oracle.psi!r}")
    def plot(ax):
        est = [p for p, _, _ in r.per_fold]
        ax.plot(range(len(est)), est, "o", label="per rotation")
        ax.axhspan(r.ci_low, r.ci_high, alpha=0.2, label=f"{100 * r.level:g}% interval")
        if realized is not None:
            ax.axhline(realized.oracle.psi, color="k", linestyle="--", label="true value")
        ax.set_xlabel("rotation")
        ax.legend()

    return ExperimentResult(list(r.FIELDS), [r.csv_row()], summary, plot)


RUNNERS = {
    Experiment.ORACLE: run_oracle,
    Experiment.BIAS_IDENTITY: run_bias_identity,
    Experiment.TIKHONOV_RATES: run_tikhonov_rates,
    Experiment.LEARNER_RATES: run_learner_rates,
    Experiment.COVERAGE: run_coverage,
    Experiment.ESTIMATE: run_estimate,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Realize the DGP and dispatch to the runner for ``cfg.experiment``."""
    realized = realize(cfg.dgp) if cfg.dgp is not None else None
    if realized is None and cfg.experiment is not Experiment.ESTIMATE:
        raise ConfigError(f"{cfg.experiment.value} needs a dgp")
    return RUNNERS[cfg.experiment](cfg, realized)


def write_outputs(result: ExperimentResult, cfg: ExperimentConfig) -> list[Path]:
    """Write results.csv, summary.txt, extra files and a best-effort plot."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in (("results.csv", result.csv_text()),
                       ("summary.txt", "\n".join(result.summary) + "\n"),
                       *result.extra_files.items()):
        p = out / name
        p.write_text(text)
        written.append(p)
    if result.plot is not None:
        p = save_plot(result.plot, out / "plot.png", cfg.experiment.value)
        if p is not None:
            written.append(p)
    return written


def save_plot(draw: Callable, path: Path, title: str) -> Path | None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except Exception as e:  # plotting is optional
        warnings.warn(f"no plot written ({e}); CSV output is unaffected", stacklevel=2)
        return None
    try:
        fig, ax = plt.subplots(figsize=(5, 4))
        draw(ax)
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, dpi=100)
        plt.close(fig)
    except Exception as e:
        warnings.warn(f"plot failed ({e}); CSV output is unaffected", stacklevel=2)
        return None
    return path


__all__ = [
    "ConfigError",
    "DGPError",
    "BasisError",
    "Experiment",
    "ExperimentConfig",
    "ExperimentResult",
    "estimator_config",
    "learner_errors",
    "load_config",
    "parse_config",
    "read_data_csv",
    "run_experiment",
    "tikhonov_errors",
    "write_outputs",
]
