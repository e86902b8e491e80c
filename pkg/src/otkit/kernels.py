"""Radial kernels used for MMD and their Hoelder constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .measures import CostSpec

VARIANTS = ("gauss", "laplace", "imq", "energy")


class HolderConstants(NamedTuple):
    alpha: float
    c_holder: float


@dataclass(frozen=True)
class RadialKernel:
    """Radial kernel ``k(x, y) = profile(|x - y|)``.

    ``gauss``: exp(-t^2/l^2), ``laplace``: exp(-t/l), ``imq``: 1/sqrt(t^2+c^2),
    ``energy``: -t. ``rate`` is the coefficient in the exponent (1/l^2 or 1/l)
    and is derived from ``length_scale`` unless given explicitly.
    """

    variant: str
    length_scale: float = 1.0
    imq_c: float = 1.0
    rate: float = field(default=None)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown kernel {self.variant!r}; choose from {VARIANTS}")
        if not self.length_scale > 0 or not self.imq_c > 0:
            raise ValueError("kernel parameters must be strictly positive")
        if self.rate is None:
            rate = {"gauss": 1.0 / self.length_scale**2, "laplace": 1.0 / self.length_scale}.get(self.variant, 0.0)
            object.__setattr__(self, "rate", rate)

    @classmethod
    def from_gibbs(cls, cost: CostSpec, lam: float) -> RadialKernel:
        """Kernel whose profile equals the Gibbs entry ``exp(-lam t^r)`` for r in {1, 2}."""
        if cost.r == 2:
            return cls("gauss", length_scale=lam**-0.5, rate=lam)
        if cost.r == 1:
            return cls("laplace", length_scale=1.0 / lam, rate=lam)
        raise ValueError("only r = 1 and r = 2 Gibbs kernels are radial kernels of this family")

    @property
    def smooth_at_zero(self) -> bool:
        return self.variant in ("gauss", "imq")

    @property
    def bounded(self) -> bool:
        return self.variant != "energy"

    def __call__(self, t):
        return evaluate(self, t)


def evaluate(k: RadialKernel, t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("kernel argument must be non-negative")
    if k.variant == "gauss":
        out = np.exp(-k.rate * (t * t))
    elif k.variant == "laplace":
        out = np.exp(-k.rate * t)
    elif k.variant == "imq":
        out = 1.0 / np.sqrt(t * t + k.imq_c * k.imq_c)
    else:
        out = -t
    return out if out.ndim else float(out)


def sup_norm(k: RadialKernel) -> float:
    """``||k||_inf = k(0)`` for the bounded kernels."""
    if not k.bounded:
        raise ValueError("the energy kernel is unbounded")
    return evaluate(k, 0.0)


def holder_constants(k: RadialKernel) -> HolderConstants:
    if k.variant == "gauss":
        return HolderConstants(1.0, 2.0 / k.length_scale**2)
    if k.variant == "laplace":
        return HolderConstants(0.5, 2.0 / k.length_scale)
    if k.variant == "imq":
        return HolderConstants(1.0, 2.0 / k.imq_c**4)
    return HolderConstants(0.5, math.sqrt(2.0))


def gibbs_entry(cost: CostSpec, lam: float, t):
    """``exp(-lam * t^r)``."""
    t = np.asarray(t, dtype=np.float64)
    if cost.r == 2:
        tr = t * t
    elif cost.r == 1:
        tr = t
    else:
        tr = t**cost.r
    out = np.exp(-lam * tr)
    return out if out.ndim else float(out)


def pseudo_metric(k: RadialKernel, t, clamp: float = 1e-14):
    """Kernel distance ``sqrt(k(x,x) - 2 k(x,y) + k(y,y))`` at ``|x - y| = t``."""
    k0 = evaluate(k, 0.0)
    rad = 2.0 * k0 - 2.0 * np.asarray(evaluate(k, t))
    if np.any(rad < -clamp):
        raise ValueError("negative radicand: kernel parameterization is not positive semi-definite")
    out = np.sqrt(np.maximum(rad, 0.0))
    return out if out.ndim else float(out)
