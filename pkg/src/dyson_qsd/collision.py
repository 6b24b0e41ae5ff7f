"""Collision detection, the dominating squared-Bessel process and hitting-time oracles.

For an adjacent pair ``l`` the squared gap ``g^2`` of the particle system is
compared with the process

    dB = 2 (2 gamma + 1) dt + 2 sqrt(2 B) dw,     w = (W^{l+1} - W^l) / sqrt(2),

driven by the same Brownian increments. ``t -> B_{t/2}`` is a squared Bessel
process of dimension ``delta = 2 gamma + 1``, which for ``gamma < 1/2`` hits 0
almost surely. A BESQ(delta) started at ``x0`` hits zero at a time distributed
as ``x0 / (2 Z)`` with ``Z ~ Gamma(1 - delta/2, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import _kernels as K
from .errors import InvalidParameter
from .integrator import Path, n_steps_for
from .rng import NoiseStream, host_generator, seed_key

ORACLE_STREAM = 7
BRIDGE_ZMAX = K.BRIDGE_ZMAX


@dataclass
class GapPath:
    times: np.ndarray
    gap_sq: np.ndarray
    pair_index: int  # 1-based, pair (l, l+1)


@dataclass
class BesqPath:
    times: np.ndarray
    values: np.ndarray


def gap_path(path: Path, pair_index: int) -> GapPath:
    n = path.n_particles
    if not 1 <= pair_index <= n - 1:
        raise InvalidParameter(f"pair_index must lie in 1..{n - 1}")
    g = path.states[:, pair_index] - path.states[:, pair_index - 1]
    return GapPath(path.times.copy(), g * g, pair_index)


def first_collision_time(path: Path, threshold: float, bridge: bool = False) -> float | None:
    """First grid time ``t > 0`` with a crossing raw update or an adjacent gap ``<= threshold``.

    With ``bridge`` the randomised Bessel-bridge test recorded on the path also
    counts, which catches hits of 0 strictly between grid points.
    """
    if threshold < 0:
        raise InvalidParameter("threshold must be nonnegative")
    if path.n_particles < 2 or path.states.shape[0] < 2:
        return None
    gaps = np.diff(path.states[1:], axis=1).min(axis=1)
    hit = (gaps <= threshold) | path.crossings[1:]
    if bridge and path.bridge_hits is not None:
        hit |= path.bridge_hits[1:]
    if not hit.any():
        return None
    return float(path.times[1 + int(np.argmax(hit))])


def besq_increments(stream: NoiseStream, pair_index: int, n_steps: int, n_particles: int) -> np.ndarray:
    """Standard normals of ``w = (W^{l+1} - W^l)/sqrt 2`` for each step of ``stream``."""
    xi = stream.normals_block(n_steps, n_particles)
    return (xi[:, pair_index] - xi[:, pair_index - 1]) / math.sqrt(2.0)


def coupled_besq(stream: NoiseStream, gamma: float, dt: float, T: float, b0: float,
                 pair_index: int = 1, n_particles: int = 2) -> BesqPath:
    """The dominating process of the gap ``pair_index`` under the same noise as the model path."""
    if b0 < 0:
        raise InvalidParameter("initial value must be nonnegative")
    n_steps = n_steps_for(T, dt)
    w = besq_increments(stream, pair_index, n_steps, n_particles)
    vals = np.empty(n_steps + 1)
    K.simulate_besq(float(b0), w, dt, 2.0 * (2.0 * gamma + 1.0), vals)
    return BesqPath(np.arange(n_steps + 1) * dt, vals)


def comparison_violation(gp: GapPath, bp: BesqPath, margin: float) -> float:
    """Fraction of grid points where ``gap^2 > B + margin``."""
    if gp.gap_sq.shape != bp.values.shape:
        raise InvalidParameter("gap and BESQ paths have different grids")
    return float(np.mean(gp.gap_sq > bp.values + margin))


def besq_hitting_oracle(delta: float, x0: float, n_samples: int, dt: float = 1e-3,
                        horizon: float = math.inf, seed: int = 0, method: str = "exact") -> np.ndarray:
    """Brute-force hitting times of 0 for BESQ(delta) started at ``x0``, on the grid ``dt``.

    ``method="exact"`` draws the grid values from the noncentral chi-square
    transition law and decides whether 0 was touched between consecutive grid
    points with the Bessel-bridge probability ``1 - I_mu(z)/I_{-mu}(z)``
    (``mu = 1 - delta/2``, ``z = sqrt(X_k X_{k+1}) / dt``); the reported time is
    the right end of the step. ``method="euler"`` is full-truncation Euler with
    a hit when the raw update is ``<= 0`` (biased early at practical ``dt``).
    Samples that have not hit by ``horizon`` are ``inf``.
    """
    if not 0 < delta < 2:
        raise InvalidParameter("delta must lie in (0, 2)")
    if not x0 > 0:
        raise InvalidParameter("x0 must be positive")
    if not dt > 0:
        raise InvalidParameter("dt must be positive")
    n_samples = int(n_samples)
    max_steps = np.iinfo(np.int64).max if math.isinf(horizon) else int(math.floor(horizon / dt + 1e-9))
    if method == "euler":
        out = np.empty(n_samples)
        k0, k1 = seed_key(seed)
        K.besq_hitting_times(float(x0), float(delta), float(dt), max_steps, k0, k1, 0, n_samples, out)
        return out
    if method != "exact":
        raise InvalidParameter(f"unknown method {method!r}")
    rng = host_generator(seed, ORACLE_STREAM)
    mu = 1.0 - delta / 2.0
    out = np.full(n_samples, np.inf)
    idx = np.arange(n_samples)
    x = np.full(n_samples, float(x0))
    k = 0
    while idx.size and k < max_steps:
        xn = dt * rng.noncentral_chisquare(delta, x / dt)
        z = np.sqrt(x * xn) / dt
        u = rng.random(idx.size)
        near = z < BRIDGE_ZMAX
        hit = np.zeros(idx.size, dtype=bool)
        if near.any():
            zn = z[near]
            # exponentially scaled Bessel functions keep the ratio finite
            p = 1.0 - special.ive(mu, zn) / special.ive(-mu, zn)
            hit[near] = (u[near] < p) | (zn == 0.0)
        k += 1
        out[idx[hit]] = k * dt
        keep = ~hit
        idx = idx[keep]
        x = xn[keep]
    return out


def besq_hitting_law(delta: float, x0: float):
    """Exact law of the hitting time: ``x0 / (2 Z)``, ``Z ~ Gamma(1 - delta/2)``, as a frozen scipy distribution."""
    if not 0 < delta < 2:
        raise InvalidParameter("delta must lie in (0, 2)")
    return stats.invgamma(1.0 - delta / 2.0, scale=x0 / 2.0)


def ks_censored(samples, cdf, horizon: float = math.inf) -> float:
    """One-sample KS distance for samples censored at ``horizon`` (censored entries are ``inf``).

    The supremum runs over ``t < horizon`` only, so censored samples never
    meet the model CDF directly.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    f = s[np.isfinite(s) & (s < horizon)]
    m = f.size
    if m == 0:
        return float(cdf(horizon)) if math.isfinite(horizon) else 1.0
    F = cdf(f)
    i = np.arange(1, m + 1)
    d = max(np.max(i / n - F), np.max(F - (i - 1) / n))
    if math.isfinite(horizon):
        d = max(d, abs(float(cdf(horizon)) - m / n))
    return float(d)


def ks_two_sample(a, b) -> float:
    """Two-sample KS statistic; ``inf`` entries (censored) are treated as tied."""
    return float(stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float)).statistic)


def boundary_occupation(path: Path, eps: float) -> float:
    """Fraction of grid times with minimal adjacent gap ``< eps``."""
    if not eps > 0:
        raise InvalidParameter("eps must be positive")
    if path.n_particles < 2:
        return 0.0
    gaps = np.diff(path.states, axis=1).min(axis=1)
    return float(np.mean(gaps < eps))


GAP_FLOOR = 1e-12


def inverse_gap_integral(path: Path, i: int, j: int) -> float:
    """Left Riemann sum of ``1 / (x^j - x^i)`` (1-based ``i < j``), gaps floored at 1e-12."""
    if not 1 <= i < j <= path.n_particles:
        raise InvalidParameter("need 1 <= i < j <= N")
    g = path.states[:-1, j - 1] - path.states[:-1, i - 1]
    return float(np.sum(1.0 / np.maximum(g, GAP_FLOOR)) * path.dt)
