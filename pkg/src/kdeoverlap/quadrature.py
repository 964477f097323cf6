"""Composite Simpson quadrature on a compact interval and the moment integrals
``I(r, s) = int f**r * g**s dx`` built from it.

All integrals of one analysis share a single uniform grid, so the entries of a
:class:`MomentTable` are mutually consistent.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "SupportInterval",
    "MomentTable",
    "REQUIRED_PAIRS",
    "TABLE_PAIRS",
    "simpson_weights",
    "integrate",
    "moment_integral",
    "table_from_grids",
    "build_moment_table",
]


@dataclass(frozen=True)
class SupportInterval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValidationError(f"support bounds must be finite, got [{lo}, {hi}]")
        if not lo < hi:
            raise ValidationError(f"degenerate support [{lo}, {hi}]: need lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def grid(self, m: int) -> np.ndarray:
        _check_points(m)
        return np.linspace(self.lo, self.hi, m)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x <= self.hi)


def _check_points(m: int) -> None:
    if int(m) != m or m < 3 or m % 2 == 0:
        raise ValidationError(f"Simpson's rule needs an odd number of points >= 3, got {m}")


@lru_cache(maxsize=64)
def _unit_weights(m: int) -> np.ndarray:
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w.setflags(write=False)
    return w


def simpson_weights(m: int, lo: float, hi: float) -> np.ndarray:
    """Weights ``w`` such that ``w @ values`` is the composite Simpson integral."""
    _check_points(m)
    step = (hi - lo) / (m - 1)
    return _unit_weights(int(m)) * (step / 3.0)


def integrate(values, support: SupportInterval) -> float:
    """Composite Simpson integral of samples taken on ``support.grid(len(values))``."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValidationError("integrate expects a 1-D array of grid values")
    w = simpson_weights(values.size, support.lo, support.hi)
    return float(w @ values)


def _key(r, s) -> Tuple[int, int]:
    # exact halves: (r, s) -> (2r, 2s)
    out = []
    for v in (r, s):
        twice = 2.0 * float(v)
        k = round(twice)
        if abs(twice - k) > 1e-12:
            raise ValidationError(f"moment orders must be multiples of 1/2, got ({r}, {s})")
        if k < 0:
            raise ValidationError(f"moment orders must be nonnegative, got ({r}, {s})")
        out.append(int(k))
    return out[0], out[1]


def _power(values: np.ndarray, p: float) -> np.ndarray:
    if p == 0:
        return np.ones_like(values)
    if p == 1:
        return values
    return np.maximum(values, 0.0) ** p


def moment_integral(fvals, gvals, r, s, support: SupportInterval) -> float:
    """Simpson approximation of ``int f**r g**s`` over ``support``.

    Negative values (only possible for user-supplied grids) are clamped to zero
    before any power other than 0 or 1 is taken.
    """
    fvals = np.asarray(fvals, dtype=float)
    gvals = np.asarray(gvals, dtype=float)
    if fvals.shape != gvals.shape or fvals.ndim != 1:
        raise ValidationError(
            f"f and g must be sampled on the same 1-D grid (shapes {fvals.shape} vs {gvals.shape})"
        )
    _key(r, s)
    return integrate(_power(fvals, r) * _power(gvals, s), support)


# Pairs consumed by the variance formulas.
REQUIRED_PAIRS: Tuple[Tuple[float, float], ...] = (
    (1, 1), (2, 0), (0, 2), (3, 0), (0, 3), (2, 1), (1, 2), (2.5, 0.5), (0.5, 2.5),
)
TABLE_PAIRS: Tuple[Tuple[float, float], ...] = REQUIRED_PAIRS + ((0, 0), (1, 0), (0, 1))


@dataclass(frozen=True)
class MomentTable:
    """Moment integrals ``I(r, s)`` keyed by the exact pair ``(2r, 2s)``."""

    entries: Mapping[Tuple[int, int], float]
    support: SupportInterval
    m: int

    def __getitem__(self, rs) -> float:
        r, s = rs
        try:
            return self.entries[_key(r, s)]
        except KeyError:
            raise KeyError(f"I({r}, {s}) not in table") from None

    def __contains__(self, rs) -> bool:
        return _key(*rs) in self.entries

    def I(self, r, s) -> float:  # noqa: E743 - mirrors the usual notation
        return self[r, s]

    def swap(self) -> "MomentTable":
        """Table for the pair (g, f): ``I'(r, s) = I(s, r)``."""
        return MomentTable({(b, a): v for (a, b), v in self.entries.items()}, self.support, self.m)

    def as_dict(self) -> Dict[str, float]:
        return {f"{Fraction(a, 2)},{Fraction(b, 2)}": v for (a, b), v in sorted(self.entries.items())}

    @classmethod
    def from_values(cls, values: Mapping[Tuple[float, float], float], support: SupportInterval, m: int = 0):
        return cls({_key(r, s): float(v) for (r, s), v in values.items()}, support, m)


def table_from_grids(
    fvals, gvals, support: SupportInterval, pairs: Iterable[Tuple[float, float]] = TABLE_PAIRS
) -> MomentTable:
    fvals = np.asarray(fvals, dtype=float)
    gvals = np.asarray(gvals, dtype=float)
    entries = {_key(r, s): moment_integral(fvals, gvals, r, s, support) for r, s in pairs}
    return MomentTable(entries, support, fvals.size)


def build_moment_table(f, g, support: SupportInterval | None = None, m: int = 1001) -> MomentTable:
    """Moment table for two densities on a common grid.

    ``f`` and ``g`` may be :class:`~kdeoverlap.kde.DensityEstimate` objects
    (already gridded; their grids must coincide) or any callable density such
    as :class:`~kdeoverlap.montecarlo.TruncatedDensity`, which is evaluated on
    ``support.grid(m)``.
    """
    fvals, fsup = _grid_values(f, support, m)
    gvals, gsup = _grid_values(g, support, m)
    sup = support or fsup or gsup
    if sup is None:
        raise ValidationError("a support interval is required for callable densities")
    if fsup is not None and fsup != sup or gsup is not None and gsup != sup:
        raise ValidationError("f and g are gridded on different supports")
    return table_from_grids(fvals, gvals, sup)


def _grid_values(d, support, m):
    values = getattr(d, "values", None)
    if values is not None and hasattr(d, "support"):
        if support is not None and d.support != support:
            raise ValidationError(
                f"density is gridded on [{d.support.lo}, {d.support.hi}], not on the requested support"
            )
        return np.asarray(values, dtype=float), d.support
    if support is None:
        support = getattr(d, "support", None)
        if support is None:
            raise ValidationError("a support interval is required for callable densities")
        return np.asarray(d(support.grid(m)), dtype=float), support
    return np.asarray(d(support.grid(m)), dtype=float), None
