"""Simulation ground truth and the replication engine.

Truncated normal and logistic densities serve as known targets. Each
replicate draws fresh samples from both, builds the two kernel estimates on
the scenario support, and records the scaled statistic
``sqrt(n h) * (estimate - truth)``.

Replicate ``i`` of a run with master seed ``s`` always uses the random stream
``SeedSequence(s, spawn_key=(i,))``, so results do not depend on execution
order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.special import expit, logit, ndtr, ndtri

from .exceptions import ValidationError
from .kde import DEFAULT_GRID, PAPER_SIM, BandwidthRule, bandwidth, kde_eval, kde_grid
from .kernels import get_kernel, kernel_moment
from .overlap import (
    confidence_interval,
    macarthur_levins,
    ml_variance,
    ML_MODES,
    pianka,
    pianka_variance,
)
from .quadrature import MomentTable, SupportInterval, build_moment_table, simpson_weights, table_from_grids

__all__ = [
    "TruncatedDensity",
    "support_from_quantile",
    "sample_truncated",
    "scenario",
    "SCENARIOS",
    "reference_table",
    "SimulationConfig",
    "ReplicationSet",
    "run_replications",
    "NormalityReport",
    "normality_diagnostics",
    "variance_bound_check",
    "bias_check",
    "export_simulation",
]

REFERENCE_GRID = 100_001
KS_C_1PCT = 1.63
MEASURES = ("pianka", "macarthur_levins")


# ---------------------------------------------------------------------------
# Truncated parametric densities
# ---------------------------------------------------------------------------

_FAMILIES = ("normal", "logistic")


def _raw_cdf(family, loc, scale, x):
    z = (np.asarray(x, dtype=float) - loc) / scale
    return ndtr(z) if family == "normal" else expit(z)


def _raw_ppf(family, loc, scale, p):
    p = np.asarray(p, dtype=float)
    return loc + scale * (ndtri(p) if family == "normal" else logit(p))


def _raw_pdf(family, loc, scale, x):
    z = (np.asarray(x, dtype=float) - loc) / scale
    if family == "normal":
        return np.exp(-0.5 * z * z) / (scale * math.sqrt(2 * math.pi))
    p = expit(z)
    return p * (1 - p) / scale


@dataclass(frozen=True)
class TruncatedDensity:
    """Normal(loc, scale) or Logistic(loc, scale) restricted to ``support``
    and renormalized."""

    family: str
    loc: float
    scale: float
    support: SupportInterval

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValidationError(f"family must be one of {_FAMILIES}, got {self.family!r}")
        if not self.scale > 0:
            raise ValidationError(f"scale must be positive, got {self.scale}")
        if not self.norm_const > 0:
            raise ValidationError("the support carries no probability mass")

    @property
    def cdf_lo(self) -> float:
        return float(_raw_cdf(self.family, self.loc, self.scale, self.support.lo))

    @property
    def cdf_hi(self) -> float:
        return float(_raw_cdf(self.family, self.loc, self.scale, self.support.hi))

    @property
    def norm_const(self) -> float:
        return self.cdf_hi - self.cdf_lo

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(self.support.contains(x), _raw_pdf(self.family, self.loc, self.scale, x), 0.0)
        out = out / self.norm_const
        return float(out) if out.ndim == 0 else out

    __call__ = pdf

    def cdf(self, x):
        raw = _raw_cdf(self.family, self.loc, self.scale, np.clip(x, self.support.lo, self.support.hi))
        return (raw - self.cdf_lo) / self.norm_const

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        x = _raw_ppf(self.family, self.loc, self.scale, self.cdf_lo + u * self.norm_const)
        return np.clip(x, self.support.lo, self.support.hi)

    def second_derivative(self, x):
        """f'' of the truncated density at interior points."""
        x = np.asarray(x, dtype=float)
        f = self.pdf(x)
        z = (x - self.loc) / self.scale
        if self.family == "normal":
            return f * (z * z - 1) / self.scale ** 2
        p = expit(z)
        return f * (1 - 6 * p * (1 - p)) / self.scale ** 2

    def mean(self) -> float:
        """Mean of the truncated law (closed form for the normal family)."""
        if self.family == "normal":
            a = (self.support.lo - self.loc) / self.scale
            b = (self.support.hi - self.loc) / self.scale
            return self.loc + self.scale * (stats.norm.pdf(a) - stats.norm.pdf(b)) / self.norm_const
        grid = self.support.grid(REFERENCE_GRID)
        return float(simpson_weights(REFERENCE_GRID, self.support.lo, self.support.hi) @ (grid * self.pdf(grid)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_truncated(self, n, rng)


def support_from_quantile(family: str, loc: float, scale: float, q: float = 0.995) -> SupportInterval:
    """``[-a, a]`` where ``a`` is the q-quantile of the untruncated law."""
    if family not in _FAMILIES:
        raise ValidationError(f"family must be one of {_FAMILIES}, got {family!r}")
    if not 0.5 < q < 1:
        raise ValidationError(f"quantile must lie in (0.5, 1), got {q}")
    a = float(_raw_ppf(family, loc, scale, q))
    if not a > 0:
        raise ValidationError(f"the {q}-quantile is {a:.4g}; a symmetric support [-a, a] needs a > 0")
    return SupportInterval(-a, a)


def sample_truncated(d: TruncatedDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` inverse-CDF draws, with uniforms mapped into ``[F(lo), F(hi)]``."""
    if n < 1:
        raise ValidationError(f"need n >= 1, got {n}")
    u = rng.random(n)
    x = _raw_ppf(d.family, d.loc, d.scale, d.cdf_lo + u * d.norm_const)
    return np.clip(x, d.support.lo, d.support.hi)


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

# (family, loc, scale) for f and g; support from the 0.995-quantile of f
SCENARIOS: Dict[str, Tuple[Tuple[str, float, float], Tuple[str, float, float]]] = {
    "case_I": (("normal", 1.0, 4.0), ("normal", 5.0, 4.5)),
    "case_II": (("normal", 5.0, 4.0), ("logistic", 0.0, 3.0)),
}


def scenario(name: str, q: float = 0.995) -> Tuple[TruncatedDensity, TruncatedDensity]:
    try:
        fp, gp = SCENARIOS[name]
    except KeyError:
        raise ValidationError(f"unknown scenario {name!r}; choose one of {', '.join(SCENARIOS)}") from None
    sup = support_from_quantile(*fp, q=q)
    return TruncatedDensity(*fp, sup), TruncatedDensity(*gp, sup)


@lru_cache(maxsize=32)
def reference_table(f: TruncatedDensity, g: TruncatedDensity, m: int = REFERENCE_GRID) -> MomentTable:
    """Moment table of the exact densities on a fine grid of f's support."""
    return build_moment_table(f, g, f.support, m)


# ---------------------------------------------------------------------------
# Replication engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulationConfig:
    scenario: str = "case_I"
    n: int = 500
    reps: int = 500
    seed: int = 0
    kernel: str = "epanechnikov"
    bandwidth: BandwidthRule = PAPER_SIM
    grid: int = DEFAULT_GRID
    measure: str = "pianka"
    level: float = 0.95
    workers: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ValidationError(f"need at least one replicate, got {self.reps}")
        if self.n < 10:
            raise ValidationError(f"simulation sample size must be >= 10, got {self.n}")
        if self.measure not in MEASURES:
            raise ValidationError(f"measure must be one of {MEASURES}, got {self.measure!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}; choose one of {', '.join(SCENARIOS)}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ValidationError(f"workers must be a positive integer, got {self.workers}")
        if not 0 < self.level < 1:
            raise ValidationError(f"confidence level must lie in (0, 1), got {self.level}")
        SupportInterval(0, 1).grid(self.grid)
        get_kernel(self.kernel)

    @property
    def h(self) -> float:
        return bandwidth(self.bandwidth, self.n)

    def densities(self) -> Tuple[TruncatedDensity, TruncatedDensity]:
        return scenario(self.scenario)


def replicate_stream(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(index,))


@dataclass
class ReplicationSet:
    config: SimulationConfig
    h: float
    true_measure: float
    sigma2_theory: float
    values: np.ndarray
    estimates: np.ndarray
    plugin_variance: np.ndarray
    seeds: np.ndarray
    sigma2_modes: Dict[str, float] = field(default_factory=dict)

    @property
    def reps(self) -> int:
        return self.values.size

    def coverage(self) -> float:
        """Fraction of plug-in intervals (at the config level) containing the truth."""
        n, h = self.config.n, self.h
        hits = 0
        for est, var in zip(self.estimates, self.plugin_variance):
            if var >= 0 and self.true_measure in confidence_interval(est, var, n, h, self.config.level):
                hits += 1
        return hits / self.reps


def _one(cfg: SimulationConfig, f, g, k02, i) -> Tuple[float, float]:
    kernel = get_kernel(cfg.kernel)
    h = cfg.h
    rng = np.random.default_rng(replicate_stream(cfg.seed, i))
    x = f.sample(cfg.n, rng)
    y = g.sample(cfg.n, rng)
    fn = kde_grid(x, kernel, h, f.support, cfg.grid)
    gn = kde_grid(y, kernel, h, f.support, cfg.grid)
    t = table_from_grids(fn.values, gn.values, f.support)
    if cfg.measure == "pianka":
        return pianka(t), pianka_variance(t, k02)
    return macarthur_levins(t), ml_variance(t, k02, "rederived")


def _chunk(args):
    cfg, f, g, k02, indices = args
    return [_one(cfg, f, g, k02, i) for i in indices]


def run_replications(
    cfg: SimulationConfig,
    f: Optional[TruncatedDensity] = None,
    g: Optional[TruncatedDensity] = None,
) -> ReplicationSet:
    """Run ``cfg.reps`` independent replicates of the scaled statistic.

    ``f`` and ``g`` default to the scenario densities; both are estimated on
    the support of ``f``.
    """
    if f is None or g is None:
        f0, g0 = cfg.densities()
        f, g = f or f0, g or g0
    kernel = get_kernel(cfg.kernel)
    k02 = kernel_moment(kernel, 0, 2)
    h = cfg.h
    ref = reference_table(f, g)
    if cfg.measure == "pianka":
        truth = pianka(ref)
        modes = {"pianka": pianka_variance(ref, k02)}
        sigma2 = modes["pianka"]
    else:
        truth = macarthur_levins(ref)
        modes = {m: ml_variance(ref, k02, m) for m in ML_MODES}
        sigma2 = modes["rederived"]

    idx = list(range(cfg.reps))
    if cfg.workers > 1 and cfg.reps > 1:
        size = math.ceil(cfg.reps / (cfg.workers * 4))
        chunks = [idx[i:i + size] for i in range(0, cfg.reps, size)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            out = [r for part in pool.map(_chunk, [(cfg, f, g, k02, c) for c in chunks]) for r in part]
    else:
        out = _chunk((cfg, f, g, k02, idx))

    est = np.array([o[0] for o in out])
    pvar = np.array([o[1] for o in out])
    seeds = np.array([replicate_stream(cfg.seed, i).generate_state(1, np.uint64)[0] for i in idx], dtype=np.uint64)
    return ReplicationSet(
        config=cfg,
        h=h,
        true_measure=truth,
        sigma2_theory=sigma2,
        values=math.sqrt(cfg.n * h) * (est - truth),
        estimates=est,
        plugin_variance=pvar,
        seeds=seeds,
        sigma2_modes=modes,
    )


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass
class NormalityReport:
    ks_stat: float
    ks_threshold_1pct: float
    qq_theoretical: np.ndarray
    qq_empirical: np.ndarray
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    empirical_mean: float
    empirical_variance: float
    sigma2: float

    @property
    def ks_pass(self) -> bool:
        return self.ks_stat < self.ks_threshold_1pct


def normality_diagnostics(r, sigma2: Optional[float] = None, bins: int = 30) -> NormalityReport:
    """Compare replicate values with N(0, sigma2).

    ``r`` is a :class:`ReplicationSet` (``sigma2`` defaults to its theoretical
    variance) or a plain array together with ``sigma2``.
    """
    if isinstance(r, ReplicationSet):
        values = r.values
        sigma2 = r.sigma2_theory if sigma2 is None else sigma2
    else:
        values = np.asarray(r, dtype=float)
        if sigma2 is None:
            raise ValidationError("sigma2 is required when passing raw values")
    if values.size < 20:
        raise ValidationError(f"normality diagnostics need at least 20 replicates, got {values.size}")
    if np.ptp(values) == 0:
        raise ValidationError("all replicate values are equal; the distribution is degenerate")
    if not sigma2 > 0:
        raise ValidationError(f"reference variance must be positive, got {sigma2}")
    sd = math.sqrt(sigma2)
    m = values.size
    ks = stats.kstest(values, "norm", args=(0.0, sd)).statistic
    ordered = np.sort(values)
    theo = sd * ndtri((np.arange(1, m + 1) - 0.5) / m)
    counts, edges = np.histogram(values, bins=bins)
    return NormalityReport(
        ks_stat=float(ks),
        ks_threshold_1pct=KS_C_1PCT / math.sqrt(m),
        qq_theoretical=theo,
        qq_empirical=ordered,
        hist_edges=edges,
        hist_counts=counts,
        empirical_mean=float(values.mean()),
        empirical_variance=float(values.var(ddof=1)),
        sigma2=float(sigma2),
    )


def variance_bound_check(
    f: TruncatedDensity,
    n: int,
    reps: int = 500,
    kernel: str = "epanechnikov",
    rule: BandwidthRule = PAPER_SIM,
    m: int = DEFAULT_GRID,
    seed: int = 0,
    slack: float = 0.05,
) -> Dict[str, float]:
    """Monte Carlo estimate of ``n h * int Var(f_n(x)) dx`` against ``k02``."""
    k = get_kernel(kernel)
    h = bandwidth(rule, n)
    k02 = kernel_moment(k, 0, 2)
    vals = np.empty((reps, m))
    for i in range(reps):
        rng = np.random.default_rng(replicate_stream(seed, i))
        vals[i] = kde_grid(f.sample(n, rng), k, h, f.support, m).values
    pointwise = vals.var(axis=0, ddof=1)
    value = n * h * float(simpson_weights(m, f.support.lo, f.support.hi) @ pointwise)
    return {"n": n, "h": h, "reps": reps, "value": value, "k02": k02, "bound": k02 * (1 + slack),
            "holds": bool(value <= k02 * (1 + slack))}


def moment_consistency(
    scenario_name: str = "case_I",
    ns: Sequence[int] = (200, 2000),
    reps: int = 200,
    pair: Tuple[float, float] = (1, 1),
    kernel: str = "epanechnikov",
    rule: BandwidthRule = PAPER_SIM,
    m: int = DEFAULT_GRID,
    seed: int = 0,
) -> Dict[str, object]:
    """Mean absolute error of the plug-in ``I_n(r, s)`` over ``reps`` samples, per ``n``."""
    f, g = scenario(scenario_name)
    k = get_kernel(kernel)
    truth = reference_table(f, g)[pair]
    rows = []
    for n in ns:
        h = bandwidth(rule, n)
        err = np.empty(reps)
        for i in range(reps):
            rng = np.random.default_rng(replicate_stream(seed, i))
            fn = kde_grid(f.sample(n, rng), k, h, f.support, m)
            gn = kde_grid(g.sample(n, rng), k, h, f.support, m)
            err[i] = abs(table_from_grids(fn.values, gn.values, f.support, [pair])[pair] - truth)
        rows.append({"n": n, "h": h, "mae": float(err.mean()), "relative_mae": float(err.mean() / truth)})
    return {"pair": pair, "truth": truth, "rows": rows}


def expected_kde(f: TruncatedDensity, kernel, h: float, x: float, points: int = 20_001) -> float:
    """``E f_n(x) = int K(v) f(x - h v) dv`` by quadrature."""
    k = get_kernel(kernel) if isinstance(kernel, str) else kernel
    v = np.linspace(-k.half_width, k.half_width, points)
    w = simpson_weights(points, -k.half_width, k.half_width)
    return float(w @ (k(v) * f.pdf(x - h * v)))


def bias_check(
    f: TruncatedDensity,
    x: float,
    ns: Sequence[int] = (500, 5000),
    reps: int = 2000,
    kernel: str = "epanechnikov",
    rule: BandwidthRule = PAPER_SIM,
    seed: int = 0,
) -> Dict[str, object]:
    """Scaled bias ``h^-2 (E f_n(x) - f(x))`` against its limit ``f''(x) k21 / 2``.

    Each ``n`` gets two estimates: a Monte Carlo average over ``reps`` samples
    (with its standard error) and the exact expectation by quadrature.
    """
    k = get_kernel(kernel)
    target = 0.5 * float(f.second_derivative(x)) * kernel_moment(k, 2, 1)
    fx = float(f.pdf(x))
    rows = []
    for n in ns:
        h = bandwidth(rule, n)
        draws = np.empty(reps)
        for i in range(reps):
            rng = np.random.default_rng(replicate_stream(seed, i))
            draws[i] = kde_eval(f.sample(n, rng), k, h, x)
        mc = (draws.mean() - fx) / h ** 2
        mc_se = draws.std(ddof=1) / math.sqrt(reps) / h ** 2
        quad = (expected_kde(f, k, h, x) - fx) / h ** 2
        rows.append({"n": n, "h": h, "mc": float(mc), "mc_se": float(mc_se), "quadrature": quad,
                     "mc_gap": abs(mc - target), "quadrature_gap": abs(quad - target)})
    return {"x": x, "target": target, "rows": rows}


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def simulation_summary(r: ReplicationSet, d: NormalityReport) -> Dict[str, object]:
    cfg = r.config
    return {
        "schema": 1,
        "scenario": cfg.scenario,
        "measure": cfg.measure,
        "n": cfg.n,
        "reps": cfg.reps,
        "seed": cfg.seed,
        "kernel": cfg.kernel,
        "bandwidth": cfg.bandwidth.describe(),
        "h": r.h,
        "grid": cfg.grid,
        "true_measure": r.true_measure,
        "sigma2_theory": r.sigma2_theory,
        "sigma2_modes": r.sigma2_modes,
        "empirical_mean": d.empirical_mean,
        "empirical_variance": d.empirical_variance,
        "variance_ratio": d.empirical_variance / r.sigma2_theory,
        "ks_stat": d.ks_stat,
        "ks_threshold_1pct": d.ks_threshold_1pct,
        "ks_pass_1pct": d.ks_pass,
        "ci_level": cfg.level,
        "ci_coverage": r.coverage(),
    }


def export_simulation(r: ReplicationSet, d: NormalityReport, out_dir) -> Dict[str, object]:
    """Write replicates.csv, qq.csv, histogram.csv and summary.json to ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(
            out / "replicates.csv",
            ["index", "seed", "estimate", "statistic", "plugin_variance"],
            zip(range(r.reps), r.seeds, r.estimates, r.values, r.plugin_variance),
        )
        _write_csv(out / "qq.csv", ["theoretical", "empirical"], zip(d.qq_theoretical, d.qq_empirical))
        _write_csv(
            out / "histogram.csv",
            ["left", "right", "count"],
            zip(d.hist_edges[:-1], d.hist_edges[1:], d.hist_counts),
        )
        summary = simulation_summary(r, d)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write simulation output to {out}: {exc}") from exc
    return summary
