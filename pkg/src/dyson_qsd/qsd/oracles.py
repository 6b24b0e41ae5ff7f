"""Independent deterministic oracles for the low-dimensional cases.

One particle: the killed Ornstein-Uhlenbeck generator ``L f = f''/2 - v'(x) f'``
on an interval, discretised in divergence form ``L f = e^{2v} (e^{-2v} f')' / 2``
so that the matrix is symmetric in the ``e^{-2v}``-weighted inner product.

Two particles: moments of the reversible law with density proportional to
``(x2 - x1)^{2 gamma} exp(-2 a (x1^2 + x2^2))`` on ``x1 < x2`` by 2-D quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from ..errors import InvalidParameter

# half-infinite intervals are truncated where the weight exp(-2 a x^2) is negligible
_TAIL_WEIGHT = 1e-30


@dataclass
class OUOracle:
    lam: float
    x: np.ndarray        # interior grid nodes
    phi: np.ndarray      # eigenfunction, max-normalised, positive
    rho: np.ndarray      # QSD density on the nodes (integrates to 1)
    interval: tuple
    a: float

    def mean_exit_time(self, x0: float) -> float:
        return float(np.interp(x0, self.x, self._mean_exit))

    def qsd_masses(self, edges) -> np.ndarray:
        """Bin masses of the QSD on ``edges`` (trapezoid on a refined interpolation)."""
        edges = np.asarray(edges, dtype=float)
        xs = np.concatenate([[self.interval[0]], self.x, [self.interval[1]]])
        ds = np.concatenate([[0.0], self.rho, [0.0]])
        out = np.empty(edges.size - 1)
        for i in range(out.size):
            u = np.linspace(edges[i], edges[i + 1], 65)
            out[i] = integrate.trapezoid(np.interp(u, xs, ds), u)
        return out / out.sum()


def _truncate(l: float, r: float, a: float) -> tuple[float, float]:
    if math.isfinite(l) and math.isfinite(r):
        return l, r
    if a <= 0:
        raise InvalidParameter("an unbounded interval needs a > 0")
    far = math.sqrt(-math.log(_TAIL_WEIGHT) / (2.0 * a))
    return (l if math.isfinite(l) else min(-far, r - far)), (r if math.isfinite(r) else max(far, l + far))


def ou_killed_oracle(interval: tuple[float, float], a: float, grid_size: int = 2000) -> OUOracle:
    """Principal Dirichlet eigenpair of ``-(f''/2 - 2 a x f')`` on ``(l, r)``.

    Returns ``lambda``, the positive eigenfunction ``phi`` and the QSD density
    ``rho ∝ phi e^{-2v}`` on ``grid_size`` interior nodes; infinite endpoints
    are truncated far in the tail. Also precomputes the mean exit time, the
    solution of ``L m = -1`` with ``m = 0`` at the ends.
    """
    l, r = interval
    if not l < r:
        raise InvalidParameter("need l < r")
    if grid_size < 200:
        raise InvalidParameter("grid_size must be >= 200")
    if a < 0:
        raise InvalidParameter("a must be >= 0")
    L, R = _truncate(l, r, a)
    h = (R - L) / (grid_size + 1)
    x = L + h * np.arange(1, grid_size + 1)
    # log-weights relative to the interval maximum avoid overflow far out
    v = a * x * x
    vm = a * (x + 0.5 * h) ** 2
    vl = a * (x - 0.5 * h) ** 2
    ref = v.min()
    m = np.exp(-2.0 * (v - ref))
    mp = np.exp(-2.0 * (vm - ref))
    mn = np.exp(-2.0 * (vl - ref))
    diag = 0.5 * (mp + mn) / (h * h * m)
    off = -0.5 * mp[:-1] / (h * h * np.sqrt(m[:-1] * m[1:]))
    w, vec = linalg.eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    psi = vec[:, 0]
    phi = psi / np.sqrt(m)
    phi = phi * np.sign(phi[np.argmax(np.abs(phi))])
    phi /= phi.max()
    rho = phi * m
    rho /= integrate.trapezoid(np.concatenate([[0.0], rho, [0.0]]), np.concatenate([[L], x, [R]]))
    # mean exit time: (-L) m = 1 in the unsymmetrised divergence form
    band = np.zeros((3, grid_size))
    band[0, 1:] = -0.5 * mp[:-1] / (h * h * m[:-1])
    band[1] = diag
    band[2, :-1] = -0.5 * mn[1:] / (h * h * m[1:])
    out = OUOracle(float(w[0]), x, phi, rho, (L, R), float(a))
    out._mean_exit = linalg.solve_banded((1, 1), band, np.ones(grid_size))
    return out


MOMENTS = {
    "gap": lambda x1, x2: x2 - x1,
    "gap_sq": lambda x1, x2: (x2 - x1) ** 2,
    "sum": lambda x1, x2: x1 + x2,
    "sum_sq": lambda x1, x2: (x1 + x2) ** 2,
    "x1": lambda x1, x2: x1,
    "x2_sq": lambda x1, x2: x2 * x2,
}


def beta_ensemble_moment_oracle(gamma: float, a: float, moment="gap", epsrel: float = 1e-10) -> float:
    """``E[f(x1, x2)]`` under the two-particle reversible law, by adaptive 2-D quadrature.

    ``moment`` names an entry of ``MOMENTS`` or is a callable ``f(x1, x2)``.
    The gap is written ``g = u^2`` so the ``g^{2 gamma}`` factor becomes the
    smooth ``2 u^{4 gamma + 1}``.
    """
    if not gamma > 0:
        raise InvalidParameter("gamma must be positive")
    if not a > 0:
        raise InvalidParameter("a must be positive")
    f = MOMENTS[moment] if isinstance(moment, str) else moment
    # the Gaussian factor is negligible beyond this radius
    span = math.sqrt(40.0 / a)
    umax = math.sqrt(2.0 * span)

    def dens(x1, u):
        g = u * u
        return 2.0 * u ** (4.0 * gamma + 1.0) * math.exp(-2.0 * a * (x1 * x1 + (x1 + g) ** 2))

    opts = dict(epsabs=0.0, epsrel=epsrel)
    z = integrate.dblquad(dens, 0.0, umax, -span, span, **opts)[0]
    num = integrate.dblquad(lambda x1, u: f(x1, x1 + u * u) * dens(x1, u), 0.0, umax, -span, span, **opts)[0]
    return num / z
