"""Potentials, drifts and Lyapunov diagnostics of the ordered particle system.

Configurations are plain 1-D float arrays ``x[0] <= x[1] <= ... <= x[N-1]``.
The confining potential is ``V_c(x) = sum_k v(x_k)`` with ``v`` either the
quadratic ``a u**2`` or identically zero, and the interaction is the
logarithmic repulsion ``V_I(x) = -gamma * sum_{i<j} log(x_j - x_i)``, equal to
``+inf`` as soon as two particles coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CollisionConfiguration, InvalidAlpha, InvalidParameter


class Regime(str, Enum):
    COLLIDING = "colliding"
    CRITICAL = "critical"
    NON_COLLIDING = "non-colliding"


@dataclass(frozen=True)
class VSpec:
    """One-particle confining potential: ``quadratic`` (``a u**2``) or ``zero``."""

    kind: str = "quadratic"
    a: float = 0.5

    def __post_init__(self):
        if self.kind not in ("quadratic", "zero"):
            raise InvalidParameter(f"unknown potential kind {self.kind!r}")
        if self.kind == "zero":
            object.__setattr__(self, "a", 0.0)
        if not (self.a >= 0.0) or not math.isfinite(self.a):
            raise InvalidParameter(f"quadratic coefficient must be >= 0, got {self.a}")

    @classmethod
    def quadratic(cls, a: float) -> "VSpec":
        return cls("quadratic", float(a))

    @classmethod
    def zero(cls) -> "VSpec":
        return cls("zero", 0.0)

    @property
    def lyapunov_admissible(self) -> bool:
        # the growth condition fails for a = 0
        return self.a > 0.0

    def value(self, u):
        return self.a * np.square(u)

    def d1(self, u):
        return 2.0 * self.a * np.asarray(u, dtype=float)

    def d2(self, u):
        return np.full(np.shape(u), 2.0 * self.a)


@dataclass(frozen=True)
class ModelParams:
    n_particles: int
    gamma: float
    vspec: VSpec = VSpec()

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise InvalidParameter(f"n_particles must be an integer >= 1, got {self.n_particles}")
        object.__setattr__(self, "n_particles", int(self.n_particles))
        if not (self.gamma > 0.0) or not math.isfinite(self.gamma):
            raise InvalidParameter(f"gamma must be positive, got {self.gamma}")

    @property
    def regime(self) -> Regime:
        if self.gamma < 0.5:
            return Regime.COLLIDING
        if self.gamma == 0.5:
            return Regime.CRITICAL
        return Regime.NON_COLLIDING


def as_configuration(x, n_particles: int | None = None) -> np.ndarray:
    """Validate ``x`` as a point of the closed chamber and return a float copy."""
    x = np.array(x, dtype=float).reshape(-1)
    if n_particles is not None and x.size != n_particles:
        raise InvalidParameter(f"expected {n_particles} coordinates, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidParameter("configuration has non-finite coordinates")
    if np.any(np.diff(x) < 0):
        raise InvalidParameter("configuration is not weakly increasing")
    return x


def in_open_chamber(x) -> bool:
    return bool(np.all(np.diff(np.asarray(x, dtype=float)) > 0))


def confining_grad(x, v: VSpec) -> np.ndarray:
    return v.d1(np.asarray(x, dtype=float))


def interaction_grad(x, gamma: float) -> np.ndarray:
    """Gradient of ``V_I``; component ``i`` is ``-gamma * sum_{j != i} 1/(x_i - x_j)``.

    Each pair term is computed once and added/subtracted so that the components
    cancel to round-off. The simulated drift is the negative of this vector.
    """
    x = np.asarray(x, dtype=float)
    gaps = np.diff(x)
    if np.any(gaps <= 0):
        raise CollisionConfiguration("interaction gradient is undefined on the chamber boundary")
    n = x.size
    out = np.zeros(n)
    for i in range(n - 1):
        t = gamma / (x[i + 1:] - x[i])
        out[i] += t.sum()
        out[i + 1:] -= t
    return out


def energy(x, p: ModelParams) -> float:
    """``V_c(x) + V_I(x)``; ``+inf`` on the boundary of the chamber."""
    x = np.asarray(x, dtype=float)
    vc = float(np.sum(p.vspec.value(x)))
    if x.size < 2:
        return vc
    diffs = x[None, :] - x[:, None]
    iu = np.triu_indices(x.size, k=1)
    pair = diffs[iu]
    if np.any(pair <= 0):
        return math.inf
    return vc - p.gamma * float(np.sum(np.log(pair)))


def divided_difference_J(u1: float, u2: float, v: VSpec) -> float:
    """``(v'(u2) - v'(u1)) / (u2 - u1)``, extended by ``v''`` on the diagonal."""
    if u2 == u1:
        return float(v.d2(u1))
    return float((v.d1(u2) - v.d1(u1)) / (u2 - u1))


def _single_particle_part(x, alpha, v):
    return alpha * float(np.sum(v.d2(x) / 2.0 - (1.0 - alpha / 2.0) * v.d1(x) ** 2))


def lyapunov_ratio(x, alpha: float, p: ModelParams) -> float:
    """``LW/W`` for ``W = exp(alpha V_c)``, valid on the closed chamber.

    Uses the divided-difference form of the interaction term, so ties are fine.
    """
    if not (0.0 < alpha < 2.0):
        raise InvalidAlpha(f"alpha must lie in (0, 2), got {alpha}")
    x = np.asarray(x, dtype=float)
    v = p.vspec
    total = _single_particle_part(x, alpha, v)
    n = x.size
    pair = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            pair += divided_difference_J(x[i], x[j], v)
    return total + p.gamma * alpha * pair


def lyapunov_ratio_direct(x, alpha: float, p: ModelParams) -> float:
    """Same quantity from ``grad V_c`` and ``grad V_I`` directly (open chamber only)."""
    if not (0.0 < alpha < 2.0):
        raise InvalidAlpha(f"alpha must lie in (0, 2), got {alpha}")
    x = np.asarray(x, dtype=float)
    gc = confining_grad(x, p.vspec)
    lap = float(np.sum(p.vspec.d2(x)))
    gi = interaction_grad(x, p.gamma) if x.size > 1 else np.zeros_like(x)
    return alpha * (lap / 2.0 - (1.0 - alpha / 2.0) * float(gc @ gc) - float(gi @ gc))


def lyapunov_bound(x, alpha: float, p: ModelParams) -> float:
    """Upper bound on :func:`lyapunov_ratio` with ``C_v = 2a``."""
    x = np.asarray(x, dtype=float)
    return _single_particle_part(x, alpha, p.vspec) + 2.0 * p.vspec.a * p.gamma * alpha * x.size**2


def growth_condition_probe(v: VSpec, delta: float, u_grid) -> np.ndarray:
    if not delta > 0:
        raise InvalidParameter("delta must be positive")
    u = np.asarray(u_grid, dtype=float)
    return v.d2(u) / 2.0 - delta * v.d1(u) ** 2
