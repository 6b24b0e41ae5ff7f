"""Killing regions ``U = U_* ∩ closed chamber`` with ``U_*`` open and convex."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels as K
from ..errors import InvalidRegion

KINDS = ("box", "gap_cap", "half_below")


@dataclass(frozen=True)
class Region:
    """One of ``box(lo, hi)``, ``gap_cap(L)`` = {x_N - x_1 < L} or ``half_below(b)`` = {x_N < b}."""

    kind: str
    lo: tuple = ()
    hi: tuple = ()
    L: float = math.nan
    b: float = math.nan

    @classmethod
    def box(cls, lo, hi) -> "Region":
        return cls("box", lo=tuple(float(v) for v in np.ravel(lo)), hi=tuple(float(v) for v in np.ravel(hi)))

    @classmethod
    def gap_cap(cls, L: float) -> "Region":
        return cls("gap_cap", L=float(L))

    @classmethod
    def half_below(cls, b: float) -> "Region":
        return cls("half_below", b=float(b))

    def validate(self, n_particles: int) -> "Region":
        """Check the region is a legal killing set for ``n_particles``; returns self."""
        if self.kind not in KINDS:
            raise InvalidRegion(f"unknown region kind {self.kind!r}")
        if self.kind == "box":
            lo, hi = np.asarray(self.lo), np.asarray(self.hi)
            if lo.size != n_particles or hi.size != n_particles:
                raise InvalidRegion("box bounds must have one entry per particle")
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise InvalidRegion("box bounds must be finite")
            # U ∩ chamber is nonempty iff lo_i < hi_j for all i <= j
            for i in range(n_particles):
                if np.any(lo[i] >= hi[i:]):
                    raise InvalidRegion("box does not meet the closed chamber")
        elif self.kind == "gap_cap":
            if not (self.L > 0) or not math.isfinite(self.L):
                raise InvalidRegion("gap_cap needs a finite L > 0")
            if n_particles < 2:
                raise InvalidRegion("gap_cap is the whole line for one particle")
        else:
            if not math.isfinite(self.b):
                raise InvalidRegion("half_below needs a finite bound")
        return self

    def kernel_args(self, n_particles: int) -> tuple:
        self.validate(n_particles)
        code = {"box": K.REGION_BOX, "gap_cap": K.REGION_GAP_CAP, "half_below": K.REGION_HALF_BELOW}[self.kind]
        lo = np.asarray(self.lo if self.kind == "box" else (0.0,), dtype=float)
        hi = np.asarray(self.hi if self.kind == "box" else (0.0,), dtype=float)
        cap = self.L if self.kind == "gap_cap" else 0.0
        bound = self.b if self.kind == "half_below" else 0.0
        return code, lo, hi, float(cap), float(bound)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(np.diff(x) < 0):
            return False
        return bool(K.in_region(*self.kernel_args(x.size), x))


def region_contains(r: Region, x) -> bool:
    return r.contains(x)
