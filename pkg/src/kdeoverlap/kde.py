"""Kernel density estimates on a compact grid, bandwidth schedules, and
runtime checks of the positivity condition on the target densities.

The estimator is the textbook one, ``f_n(x) = (n h)^-1 sum_i K((x - X_i) / h)``.
Grid evaluation is an exact direct sum; compact kernels mean each observation
only touches the grid points within ``h * half_width`` of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import ValidationError
from .kernels import EPANECHNIKOV, KernelSpec
from .quadrature import SupportInterval, integrate

__all__ = [
    "Sample",
    "as_sample",
    "BandwidthRule",
    "bandwidth",
    "kde_eval",
    "kde_grid",
    "DensityEstimate",
    "Diagnostics",
    "assumption_diagnostics",
    "default_support",
    "common_support",
]

DEFAULT_GRID = 1001
POSITIVITY_THRESHOLD = 1e-6


@dataclass(frozen=True)
class Sample:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 2:
            raise ValidationError(f"a sample needs at least 2 observations, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("sample contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size


def as_sample(x) -> Sample:
    return x if isinstance(x, Sample) else Sample(x)


# ---------------------------------------------------------------------------
# Bandwidth schedules
# ---------------------------------------------------------------------------

_KINDS = ("power", "scaled_log", "paper_sim", "paper_app", "fixed")


@dataclass(frozen=True)
class BandwidthRule:
    """A bandwidth schedule ``n -> h_n``.

    ``power``       h = n**-alpha, alpha in (1/3, 1)
    ``scaled_log``  h = c * sqrt(log n) * n**-p, p in (1/3, 1]
    ``paper_sim``   h = sqrt(log n) / (0.45 n**(2/3))
    ``paper_app``   h = 4.2 / n**(2/3)
    ``fixed``       h = constant
    """

    kind: str
    alpha: Optional[float] = None
    c: Optional[float] = None
    p: Optional[float] = None
    h: Optional[float] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown bandwidth rule {self.kind!r}; choose one of {', '.join(_KINDS)}")
        if self.kind == "power":
            if self.alpha is None or not (1 / 3 < self.alpha < 1):
                raise ValidationError(
                    f"power rule needs alpha in (1/3, 1), got {self.alpha}: alpha <= 1/3 breaks "
                    "n*h^3 -> 0 and alpha >= 1 breaks n*h -> infinity"
                )
        elif self.kind == "scaled_log":
            if self.c is None or not self.c > 0:
                raise ValidationError(f"scaled_log rule needs c > 0, got {self.c}")
            if self.p is None or not (1 / 3 < self.p <= 1):
                raise ValidationError(
                    f"scaled_log rule needs p in (1/3, 1], got {self.p}: p <= 1/3 breaks n*h^3 -> 0"
                )
        elif self.kind == "fixed":
            if self.h is None or not (self.h > 0 and math.isfinite(self.h)):
                raise ValidationError(f"fixed bandwidth must be positive, got {self.h}")

    @classmethod
    def power(cls, alpha: float):
        return cls("power", alpha=alpha)

    @classmethod
    def scaled_log(cls, c: float, p: float):
        return cls("scaled_log", c=c, p=p)

    @classmethod
    def fixed(cls, h: float):
        return cls("fixed", h=h)

    @classmethod
    def parse(cls, text: str) -> "BandwidthRule":
        """Parse ``paper_sim``, ``paper_app``, ``power:0.5``, ``scaled_log:2.2,0.67`` or ``fixed:0.3``."""
        kind, _, args = text.strip().partition(":")
        try:
            nums = [float(a) for a in args.split(",")] if args else []
        except ValueError:
            raise ValidationError(f"bad bandwidth parameters in {text!r}") from None
        arity = {"power": 1, "scaled_log": 2, "fixed": 1, "paper_sim": 0, "paper_app": 0}
        if kind not in arity:
            raise ValidationError(f"unknown bandwidth rule {kind!r}")
        if len(nums) != arity[kind]:
            raise ValidationError(f"bandwidth rule {kind!r} takes {arity[kind]} parameter(s), got {text!r}")
        if kind == "power":
            return cls.power(nums[0])
        if kind == "scaled_log":
            return cls.scaled_log(*nums)
        if kind == "fixed":
            return cls.fixed(nums[0])
        return cls(kind)

    def describe(self) -> str:
        if self.kind == "power":
            return f"power:{self.alpha}"
        if self.kind == "scaled_log":
            return f"scaled_log:{self.c},{self.p}"
        if self.kind == "fixed":
            return f"fixed:{self.h}"
        return self.kind

    def __call__(self, n: int) -> float:
        return bandwidth(self, n)


PAPER_SIM = BandwidthRule("paper_sim")
PAPER_APP = BandwidthRule("paper_app")


def bandwidth(rule: BandwidthRule, n: int) -> float:
    if int(n) != n or n < 2:
        raise ValidationError(f"bandwidth needs n >= 2, got {n}")
    n = float(n)
    if rule.kind == "power":
        return n ** -rule.alpha
    if rule.kind == "scaled_log":
        return rule.c * math.sqrt(math.log(n)) * n ** -rule.p
    if rule.kind == "paper_sim":
        return math.sqrt(math.log(n)) / (0.45 * n ** (2 / 3))
    if rule.kind == "paper_app":
        return 4.2 / n ** (2 / 3)
    return float(rule.h)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def _check_h(h: float) -> float:
    h = float(h)
    if not (h > 0 and math.isfinite(h)):
        raise ValidationError(f"bandwidth must be positive and finite, got {h}")
    return h


def kde_eval(s, k: KernelSpec, h: float, x):
    """KDE of sample ``s`` at ``x`` (scalar or array)."""
    data = as_sample(s).values
    h = _check_h(h)
    x_arr = np.asarray(x, dtype=float)
    flat = x_arr.ravel()
    out = np.empty(flat.size)
    # chunk to bound memory at n * chunk floats
    chunk = max(1, 2_000_000 // data.size)
    for start in range(0, flat.size, chunk):
        u = (flat[start:start + chunk, None] - data[None, :]) / h
        out[start:start + chunk] = k(u).sum(axis=1)
    out /= data.size * h
    return float(out[0]) if x_arr.ndim == 0 else out.reshape(x_arr.shape)


def _grid_sum(data: np.ndarray, k: KernelSpec, h: float, lo: float, hi: float, m: int) -> np.ndarray:
    grid = np.linspace(lo, hi, m)
    dx = (hi - lo) / (m - 1)
    reach = h * k.half_width
    width = int(math.ceil(2 * reach / dx)) + 3
    if width >= m:
        u = (grid[:, None] - data[None, :]) / h
        return k(u).sum(axis=1)
    # each observation only touches grid indices [first, first + width)
    first = np.floor((data - reach - lo) / dx).astype(np.int64) - 1
    acc = np.zeros(m)
    for off in range(width):
        j = first + off
        ok = (j >= 0) & (j < m)
        if not ok.any():
            continue
        jj = j[ok]
        acc += np.bincount(jj, weights=k((grid[jj] - data[ok]) / h), minlength=m)
    return acc


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    h: float
    kernel: KernelSpec
    n: int
    support: SupportInterval

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def mass(self) -> float:
        return integrate(self.values, self.support)

    def __call__(self, x):
        return np.interp(x, self.grid, self.values, left=0.0, right=0.0)


def kde_grid(s, k: KernelSpec, h: float, support: SupportInterval, m: int = DEFAULT_GRID) -> DensityEstimate:
    """Evaluate the KDE of ``s`` on ``m`` equally spaced points of ``support``."""
    data = as_sample(s).values
    h = _check_h(h)
    grid = support.grid(m)
    values = _grid_sum(data, k, h, support.lo, support.hi, m) / (data.size * h)
    grid.setflags(write=False)
    values.setflags(write=False)
    return DensityEstimate(grid, values, h, k, data.size, support)


def default_support(s, h: float, k: KernelSpec = EPANECHNIKOV) -> SupportInterval:
    """Sample range widened by the kernel reach ``h * half_width`` on both sides."""
    data = as_sample(s).values
    reach = _check_h(h) * k.half_width
    return SupportInterval(data.min() - reach, data.max() + reach)


def common_support(samples: Sequence, h: float, k: KernelSpec = EPANECHNIKOV) -> SupportInterval:
    """Union of the per-sample default supports."""
    parts = [default_support(s, h, k) for s in samples]
    return SupportInterval(min(p.lo for p in parts), max(p.hi for p in parts))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostics:
    c_min: float
    c_max: float
    threshold: float
    warning: Optional[str] = None

    def as_dict(self):
        return {"c_min": self.c_min, "c_max": self.c_max, "threshold": self.threshold, "warning": self.warning}


def assumption_diagnostics(d, threshold: float = POSITIVITY_THRESHOLD) -> Diagnostics:
    """Empirical lower and upper bounds of a gridded density.

    A minimum at or below ``threshold`` means the density is not bounded away
    from zero on the support, which the limit theory requires. This is only
    reported; nothing is blocked.
    """
    values = np.asarray(getattr(d, "values", d), dtype=float)
    lo, hi = float(values.min()), float(values.max())
    msg = None
    if lo <= threshold:
        msg = (
            f"density estimate is not bounded away from zero on the support "
            f"(min {lo:.3g} <= {threshold:g}); the asymptotic variance may be unreliable"
        )
    return Diagnostics(lo, hi, threshold, msg)
