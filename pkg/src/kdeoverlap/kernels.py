"""Compactly supported symmetric kernels and their moments.

Moments are ``k_ij = int u**i * K(u)**j du`` over the kernel support.
Every built-in kernel registers closed-form values for the moments used by the
variance formulas; anything else is computed by composite Simpson quadrature
and cached on the kernel.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Tuple

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "KernelSpec",
    "EPANECHNIKOV",
    "TRIANGULAR",
    "BIWEIGHT",
    "BOX",
    "KERNELS",
    "get_kernel",
    "eval_kernel",
    "kernel_moment",
]

MAX_MOMENT_I = 4
MAX_MOMENT_J = 2
_QUAD_POINTS = 2001


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A symmetric probability kernel supported on ``[-half_width, half_width]``.

    ``func`` receives a numpy array and must return ``K(u)`` for ``|u| <=
    half_width``; masking outside the support is done here, so ``func`` does not
    need to handle it.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    half_width: float = 1.0
    closed_moments: Mapping[Tuple[int, int], float] = field(default_factory=dict)
    _cache: Dict[Tuple[int, int], float] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if not self.half_width > 0 or not np.isfinite(self.half_width):
            raise ValidationError(f"kernel {self.name!r}: half_width must be positive and finite")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) <= self.half_width
        out = np.zeros_like(u)
        if out.ndim == 0:
            return float(self.func(u)) if inside else 0.0
        out[inside] = self.func(u[inside])
        return out

    def moment(self, i: int, j: int) -> float:
        return kernel_moment(self, i, j)

    def quadrature_moment(self, i: int, j: int, points: int = _QUAD_POINTS) -> float:
        """``k_ij`` by composite Simpson on the support, ignoring closed forms."""
        from .quadrature import simpson_weights

        u = np.linspace(-self.half_width, self.half_width, points)
        w = simpson_weights(points, -self.half_width, self.half_width)
        return float(w @ (u**i * self(u) ** j))


def eval_kernel(k: KernelSpec, u):
    """Evaluate ``k`` at ``u`` (scalar or array); zero outside the support."""
    return k(u)


def kernel_moment(k: KernelSpec, i: int, j: int) -> float:
    """Return ``k_ij`` for ``0 <= i <= 4`` and ``1 <= j <= 2``.

    The value is computed once per kernel and pair, then served from a cache
    guarded by a lock so concurrent callers see a single computation.
    """
    if not (isinstance(i, (int, np.integer)) and isinstance(j, (int, np.integer))):
        raise ValidationError("moment orders must be integers")
    if not (0 <= i <= MAX_MOMENT_I and 1 <= j <= MAX_MOMENT_J):
        raise ValidationError(
            f"unsupported kernel moment (i={i}, j={j}); need 0<=i<={MAX_MOMENT_I}, 1<=j<={MAX_MOMENT_J}"
        )
    key = (int(i), int(j))
    cached = k._cache.get(key)
    if cached is not None:
        return cached
    with k._lock:
        if key not in k._cache:
            if key in k.closed_moments:
                k._cache[key] = float(k.closed_moments[key])
            else:
                k._cache[key] = k.quadrature_moment(*key)
        return k._cache[key]


def _odd_zero(pairs):
    # odd moments of a symmetric kernel vanish
    return {(i, j): 0.0 for i in (1, 3) for j in pairs}


EPANECHNIKOV = KernelSpec(
    "epanechnikov",
    lambda u: 0.75 * (1.0 - u * u),
    closed_moments={
        (0, 1): 1.0, (2, 1): 1 / 5, (4, 1): 3 / 35,
        (0, 2): 3 / 5, (2, 2): 3 / 35, (4, 2): 1 / 35,
        **_odd_zero((1, 2)),
    },
)

TRIANGULAR = KernelSpec(
    "triangular",
    lambda u: 1.0 - np.abs(u),
    closed_moments={
        (0, 1): 1.0, (2, 1): 1 / 6, (4, 1): 1 / 15,
        (0, 2): 2 / 3, (2, 2): 1 / 15, (4, 2): 2 / 105,
        **_odd_zero((1, 2)),
    },
)

BIWEIGHT = KernelSpec(
    "biweight",
    lambda u: 0.9375 * (1.0 - u * u) ** 2,
    closed_moments={
        (0, 1): 1.0, (2, 1): 1 / 7, (4, 1): 1 / 21,
        (0, 2): 5 / 7, (2, 2): 5 / 77, (4, 2): 15 / 1001,
        **_odd_zero((1, 2)),
    },
)

BOX = KernelSpec(
    "box",
    lambda u: np.full_like(u, 0.5),
    closed_moments={
        (0, 1): 1.0, (2, 1): 1 / 3, (4, 1): 1 / 5,
        (0, 2): 1 / 2, (2, 2): 1 / 6, (4, 2): 1 / 10,
        **_odd_zero((1, 2)),
    },
)

KERNELS: Dict[str, KernelSpec] = {k.name: k for k in (EPANECHNIKOV, TRIANGULAR, BIWEIGHT, BOX)}


def get_kernel(name: str) -> KernelSpec:
    try:
        return KERNELS[name.lower()]
    except KeyError:
        raise ValidationError(
            f"unknown kernel {name!r}; choose one of {', '.join(KERNELS)}"
        ) from None
