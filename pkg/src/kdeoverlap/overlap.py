"""Pianka and MacArthur-Levins overlap measures, their plug-in asymptotic
variances, and normal-theory confidence intervals.

With ``a = <f, g>``, ``b = ||f||^2`` and ``c = ||g||^2``::

    pianka           rho   = a / sqrt(b c)
    macarthur_levins Delta = a / b

Every function here takes a :class:`~kdeoverlap.quadrature.MomentTable`; the
same formulas serve the analytic densities (true values) and the kernel
estimates (plug-in values).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.special import ndtri

from .exceptions import DegenerateDensityError, ValidationError
from .kde import (
    DEFAULT_GRID,
    BandwidthRule,
    as_sample,
    assumption_diagnostics,
    bandwidth,
    common_support,
    kde_grid,
)
from .kernels import get_kernel, kernel_moment
from .quadrature import MomentTable, SupportInterval, build_moment_table

__all__ = [
    "pianka",
    "macarthur_levins",
    "pianka_functionals",
    "pianka_variance",
    "pianka_variance_delta",
    "pianka_covariance",
    "ml_variance",
    "ml_variance_delta",
    "ML_MODES",
    "z_quantile",
    "implied_z",
    "ConfidenceInterval",
    "confidence_interval",
    "OverlapEstimate",
    "AnalysisConfig",
    "OverlapReport",
    "estimate_overlap",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1
ML_MODES = ("rederived", "as_printed")


# ---------------------------------------------------------------------------
# Point values
# ---------------------------------------------------------------------------

def pianka(t: MomentTable) -> float:
    """Cosine of the angle between f and g in L2 of the support."""
    norm2 = t[2, 0] * t[0, 2]
    if not norm2 > 0:
        raise DegenerateDensityError("Pianka's measure is undefined: a density has zero L2 norm")
    return t[1, 1] / math.sqrt(norm2)


def macarthur_levins(t: MomentTable) -> float:
    """``<f, g> / ||f||^2``; may exceed one."""
    b = t[2, 0]
    if not b > 0:
        raise DegenerateDensityError("MacArthur-Levins measure is undefined: ||f|| = 0")
    return t[1, 1] / b


# ---------------------------------------------------------------------------
# Pianka variance
# ---------------------------------------------------------------------------

def pianka_functionals(t: MomentTable) -> Dict[str, float]:
    """The five functionals A..E entering the Pianka variance."""
    I = t.I
    return {
        "A": I(0, 3) * I(1, 1) ** 2 * I(2, 0) ** 2,
        "B": I(0.5, 2.5) * I(1, 1) * I(2, 0) ** 2 * I(0, 2),
        "C": I(0, 2) ** 2 * (I(2, 0) ** 2 * I(1, 2) + I(2, 0) ** 2 * I(2, 1) + I(1, 1) ** 2 * I(3, 0)),
        "D": I(1, 1) * I(2, 0) * I(0, 2) ** 2 * I(2.5, 0.5),
        "E": I(2, 0) ** 3 * I(0, 2) ** 3,
    }


def pianka_variance(t: MomentTable, k02: float) -> float:
    """``k02 (A - 2B + C - 2D) / E``, the limiting variance of sqrt(n h)(rho_n - rho).

    Can come out negative for an unlucky plug-in table; the value is returned
    as is so callers can flag it.
    """
    F = pianka_functionals(t)
    if not F["E"] > 0:
        raise DegenerateDensityError("Pianka variance is undefined: ||f||^2 ||g||^2 = 0")
    return k02 * (F["A"] - 2 * F["B"] + F["C"] - 2 * F["D"]) / F["E"]


def pianka_covariance(t: MomentTable) -> np.ndarray:
    """Covariance of the limit of (<f,g>, ||f||^2, ||g||^2), in units of k02."""
    I = t.I
    return np.array([
        [I(2, 1) + I(1, 2), 2 * I(2.5, 0.5), 2 * I(0.5, 2.5)],
        [2 * I(2.5, 0.5), 4 * I(3, 0), 0.0],
        [2 * I(0.5, 2.5), 0.0, 4 * I(0, 3)],
    ])


def pianka_variance_delta(t: MomentTable, k02: float) -> float:
    """Same quantity as :func:`pianka_variance`, via ``k02 * grad' Sigma grad``
    for ``psi(t1, t2, t3) = t1 / sqrt(t2 t3)``."""
    a, b, c = t[1, 1], t[2, 0], t[0, 2]
    if not (b > 0 and c > 0):
        raise DegenerateDensityError("Pianka variance is undefined: ||f||^2 ||g||^2 = 0")
    grad = np.array([
        1 / math.sqrt(b * c),
        -0.5 * a * b ** -1.5 * c ** -0.5,
        -0.5 * a * b ** -0.5 * c ** -1.5,
    ])
    return float(k02 * grad @ pianka_covariance(t) @ grad)


# ---------------------------------------------------------------------------
# MacArthur-Levins variance
# ---------------------------------------------------------------------------
# The closed forms below are stated for <f,g>/||g||^2, the orientation in
# which the reference variance is written. ``orientation="f"`` (the default,
# matching macarthur_levins) evaluates them on the swapped table.

_ML_POWERS = {"rederived": (3, 4), "as_printed": (5, 8)}


def _oriented(t: MomentTable, orientation: str) -> MomentTable:
    if orientation == "f":
        return t.swap()
    if orientation == "g":
        return t
    raise ValidationError(f"orientation must be 'f' or 'g', got {orientation!r}")


def _check_mode(mode: str) -> None:
    if mode not in _ML_POWERS:
        raise ValidationError(f"mode must be one of {ML_MODES}, got {mode!r}")


def ml_variance(t: MomentTable, k02: float, mode: str = "rederived", orientation: str = "f") -> float:
    """Limiting variance of sqrt(n h)(Delta_n - Delta), including the k02 factor.

    ``as_printed`` keeps the denominator powers 5 and 8 as originally printed;
    ``rederived`` uses the powers 3 and 4 implied by the gradient of t1/t2.
    Both agree when the squared norm in the denominator equals one.
    """
    _check_mode(mode)
    I = _oriented(t, orientation).I
    c = I(0, 2)
    if not c > 0:
        raise DegenerateDensityError("MacArthur-Levins variance is undefined: zero squared norm")
    p_mid, p_last = _ML_POWERS[mode]
    s2 = (
        (I(2, 1) + I(1, 2)) / c ** 2
        - 4 * I(0.5, 2.5) * I(1, 1) / c ** p_mid
        + 4 * I(0, 3) * I(1, 1) ** 2 / c ** p_last
    )
    return k02 * s2


def ml_variance_delta(t: MomentTable, k02: float, mode: str = "rederived", orientation: str = "f") -> float:
    """:func:`ml_variance` through the 2x2 covariance block and a gradient.

    ``rederived`` uses ``(1/c, -a/c^2)``; ``as_printed`` uses the printed
    second component ``-a/c^4``, which reproduces the printed closed form.
    """
    _check_mode(mode)
    I = _oriented(t, orientation).I
    a, c = I(1, 1), I(0, 2)
    if not c > 0:
        raise DegenerateDensityError("MacArthur-Levins variance is undefined: zero squared norm")
    block = np.array([[I(2, 1) + I(1, 2), 2 * I(0.5, 2.5)], [2 * I(0.5, 2.5), 4 * I(0, 3)]])
    grad = np.array([1 / c, -a / c ** (2 if mode == "rederived" else 4)])
    return float(k02 * grad @ block @ grad)


# ---------------------------------------------------------------------------
# Intervals
# ---------------------------------------------------------------------------

def z_quantile(level: float) -> float:
    """Two-sided normal multiplier ``z_{1 - alpha/2}`` for confidence ``level``."""
    if not 0 < level < 1:
        raise ValidationError(f"confidence level must lie in (0, 1), got {level}")
    return float(ndtri(0.5 + level / 2))


def implied_z(lo: float, hi: float, se: float) -> float:
    """Normal multiplier that turns ``se`` into the half-width of ``[lo, hi]``."""
    if not se > 0:
        raise ValidationError("standard error must be positive")
    return (hi - lo) / (2 * se)


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    level: float
    z: float

    def __contains__(self, value) -> bool:
        return self.lo <= value <= self.hi


def confidence_interval(point: float, variance: float, n: int, h: float, level: float = 0.95) -> ConfidenceInterval:
    """``point -/+ z sqrt(variance / (n h))``."""
    if variance < 0:
        raise ValidationError(
            f"negative plug-in variance {variance:.4g}: the plug-in formula failed, "
            "most likely because the estimated densities violate the positivity assumption"
        )
    if n < 1 or not h > 0:
        raise ValidationError("need n >= 1 and h > 0")
    z = z_quantile(level)
    half = z * math.sqrt(variance / (n * h))
    return ConfidenceInterval(point - half, point + half, level, z)


@dataclass(frozen=True)
class OverlapEstimate:
    measure: str
    point: float
    variance: float
    n: int
    h: float
    k02: float
    ci: Optional[ConfidenceInterval] = None
    extra: Dict[str, float] = field(default_factory=dict)

    @property
    def se(self) -> Optional[float]:
        if not self.variance >= 0:
            return None
        return math.sqrt(self.variance / (self.n * self.h))

    @property
    def variance_ok(self) -> bool:
        return math.isfinite(self.variance) and self.variance >= 0

    def as_dict(self) -> Dict[str, Any]:
        out = {"point": self.point, "variance": self.variance, "se": self.se}
        out.update(self.extra)
        out["ci"] = asdict(self.ci) if self.ci is not None else None
        return out


# ---------------------------------------------------------------------------
# End-to-end estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisConfig:
    """Everything that determines an estimate besides the data.

    ``support`` is ``"auto"`` (union of sample ranges widened by the kernel
    reach), ``"lo,hi"``, or ``"quantile:q"`` (``[-a, a]`` with ``a`` the
    empirical q-quantile of the x sample).
    """

    kernel: str = "epanechnikov"
    bandwidth: str = "paper_app"
    support: str = "auto"
    grid: int = DEFAULT_GRID
    level: float = 0.95
    ml_mode: str = "rederived"

    def __post_init__(self):
        get_kernel(self.kernel)
        BandwidthRule.parse(self.bandwidth)
        if not 0 < self.level < 1:
            raise ValidationError(f"confidence level must lie in (0, 1), got {self.level}")
        _check_mode(self.ml_mode)

    @property
    def rule(self) -> BandwidthRule:
        return BandwidthRule.parse(self.bandwidth)


def _resolve_support(policy: str, x, y, h, kernel) -> SupportInterval:
    policy = policy.strip()
    if policy == "auto":
        return common_support([x, y], h, kernel)
    if policy.startswith("quantile:"):
        try:
            q = float(policy.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"bad support policy {policy!r}") from None
        if not 0.5 < q < 1:
            raise ValidationError(f"support quantile must lie in (0.5, 1), got {q}")
        a = float(np.quantile(as_sample(x).values, q))
        if not a > 0:
            raise ValidationError(f"quantile support [-a, a] needs a > 0, got a = {a}")
        return SupportInterval(-a, a)
    try:
        lo, hi = (float(v) for v in policy.split(","))
    except ValueError:
        raise ValidationError(f"support must be 'auto', 'quantile:q' or 'lo,hi', got {policy!r}") from None
    return SupportInterval(lo, hi)


@dataclass
class OverlapReport:
    """Serializable summary of one two-sample analysis."""

    config: Dict[str, Any]
    n: Dict[str, int]
    h: float
    support: Dict[str, Any]
    kernel_moments: Dict[str, float]
    measures: Dict[str, Dict[str, Any]]
    moments: Dict[str, float]
    diagnostics: Dict[str, Dict[str, Any]]
    warnings: List[str]
    schema: int = SCHEMA_VERSION

    def to_dict(self) -> Dict[str, Any]:
        out = {"schema": self.schema}
        out.update({k: v for k, v in asdict(self).items() if k != "schema"})
        extra: List[str] = []
        out = _nullify(out, extra)
        out["warnings"] = out["warnings"] + extra
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "OverlapReport":
        d = dict(d)
        if d.get("schema") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported report schema {d.get('schema')!r}")
        return cls(**d)

    @property
    def rho(self) -> float:
        return self.measures["pianka"]["point"]

    @property
    def delta(self) -> float:
        return self.measures["macarthur_levins"]["point"]


def _nullify(obj, warnings_out: List[str], path: str = ""):
    # non-finite floats become null, with a warning naming the field
    if isinstance(obj, dict):
        return {k: _nullify(v, warnings_out, f"{path}.{k}" if path else k) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nullify(v, warnings_out, path) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        msg = f"{path} is not finite ({obj}); reported as null"
        if msg not in warnings_out:
            warnings_out.append(msg)
        return None
    return obj


def _ci_or_none(point, variance, n, h, level, label, warnings_out):
    if not math.isfinite(variance):
        return None
    if variance < 0:
        warnings_out.append(
            f"{label}: plug-in variance is negative ({variance:.4g}); no standard error or interval reported"
        )
        return None
    return confidence_interval(point, variance, n, h, level)


def estimate_overlap(x, y, cfg: AnalysisConfig = AnalysisConfig()) -> OverlapReport:
    """Plug-in estimates of both overlap measures with variances and intervals.

    When the samples differ in size, the smaller size drives the bandwidth and
    the standard errors, and the report says the result is outside the
    equal-size setting the limit theory covers.
    """
    xs, ys = as_sample(x), as_sample(y)
    kernel = get_kernel(cfg.kernel)
    rule = cfg.rule
    k02 = kernel_moment(kernel, 0, 2)
    warns: List[str] = []
    n = min(xs.n, ys.n)
    if xs.n != ys.n:
        warns.append(
            f"unequal sample sizes ({xs.n} vs {ys.n}) are outside paper assumptions; "
            f"bandwidth and standard errors use n = {n}"
        )
    if n < 10:
        warns.append(f"very small sample (n = {n}); asymptotic intervals are unreliable")
    h = bandwidth(rule, n)
    support = _resolve_support(cfg.support, xs, ys, h, kernel)
    fn = kde_grid(xs, kernel, h, support, cfg.grid)
    gn = kde_grid(ys, kernel, h, support, cfg.grid)
    step = support.length / (cfg.grid - 1)
    if 2 * h * kernel.half_width < 4 * step:
        warns.append(
            f"grid spacing {step:.4g} is coarse relative to the kernel span {2 * h * kernel.half_width:.4g}; "
            "increase the grid size for accurate integrals"
        )
    for label, s in (("x", xs), ("y", ys)):
        outside = int(np.count_nonzero(~support.contains(s.values)))
        if outside:
            warns.append(f"{outside} observation(s) of {label} fall outside the support")
    t = build_moment_table(fn, gn)

    rho = pianka(t)
    rho_var = pianka_variance(t, k02)
    rho_est = OverlapEstimate(
        "pianka", rho, rho_var, n, h, k02,
        _ci_or_none(rho, rho_var, n, h, cfg.level, "pianka", warns),
    )

    measures = {"pianka": rho_est.as_dict()}
    for name, orientation, point in (
        ("macarthur_levins", "f", macarthur_levins(t)),
        ("macarthur_levins_yx", "g", macarthur_levins(t.swap())),
    ):
        variants = {m: ml_variance(t, k02, m, orientation) for m in ML_MODES}
        var = variants[cfg.ml_mode]
        est = OverlapEstimate(
            name, point, var, n, h, k02,
            _ci_or_none(point, var, n, h, cfg.level, name, warns),
            {"mode": cfg.ml_mode, **{f"variance_{m}": v for m, v in variants.items()}},
        )
        measures[name] = est.as_dict()

    diags = {}
    for label, d in (("x", fn), ("y", gn)):
        dg = assumption_diagnostics(d)
        diags[label] = dg.as_dict()
        if dg.warning:
            warns.append(f"{label}: {dg.warning}")

    return OverlapReport(
        config={
            "kernel": kernel.name,
            "bandwidth": rule.describe(),
            "support_policy": cfg.support,
            "grid": cfg.grid,
            "level": cfg.level,
            "ml_mode": cfg.ml_mode,
        },
        n={"x": xs.n, "y": ys.n},
        h=h,
        support={"lo": support.lo, "hi": support.hi, "policy": cfg.support},
        kernel_moments={"k02": k02, "k21": kernel_moment(kernel, 2, 1)},
        measures=measures,
        moments=t.as_dict(),
        diagnostics=diags,
        warnings=warns,
    )
