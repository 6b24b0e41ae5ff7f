"""Fleming-Viot approximation of the quasi-stationary distribution.

``M`` copies of the killed process move independently; whenever one leaves
``U`` it jumps onto the post-step position of a uniformly chosen survivor.
Propagation noise for particle ``j`` at generation ``g`` is the Brownian stream
at ``(path=j, step=g)`` and the survivor choice is the resampling stream at the
same address, so the ensemble is a deterministic function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels as K
from ..errors import EnsembleExtinct, InvalidParameter, ProxNoConvergence
from ..integrator import SchemeConfig, n_steps_for
from ..model import ModelParams
from ..rng import seed_key
from .measures import EmpiricalMeasure
from .regions import Region


@dataclass(frozen=True)
class FVEnsemble:
    particles: np.ndarray
    generation: int = 0
    resample_count: int = 0

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.particles, dtype=float))
        if x.shape[0] < 2:
            raise InvalidParameter("a Fleming-Viot ensemble needs M >= 2 particles")
        object.__setattr__(self, "particles", x)

    @property
    def size(self) -> int:
        return self.particles.shape[0]


def _check_inside(x, r: Region):
    for row in x:
        if not r.contains(row):
            raise InvalidParameter(f"ensemble particle {row} is not in the region")


def _advance(e: FVEnsemble, n_steps: int, r: Region, cfg: SchemeConfig, p: ModelParams, seed: int,
             snap_every: int = 0, snap_offset: int = 0, n_snaps: int = 0, zero_noise: bool = False):
    x = np.array(e.particles, dtype=float, order="C")
    k0, k1 = seed_key(seed)
    snaps = np.empty((max(n_snaps, 1), x.shape[0], x.shape[1]))
    resamples = np.zeros(max(n_steps, 1), dtype=np.int64)
    status, done = K.fv_advance(x, e.generation, n_steps, *cfg.kernel_args(p), k0, k1, 1,
                                0.0 if zero_noise else 1.0, *r.kernel_args(p.n_particles),
                                snap_every, snap_offset, snaps, resamples)
    if status == 1:
        raise EnsembleExtinct(f"all {x.shape[0]} particles left the region at generation {e.generation + done}",
                              generation=e.generation + done)
    if status == 2:
        raise ProxNoConvergence(f"proximal solve failed at generation {e.generation + done}",
                                step_index=e.generation + done)
    out = FVEnsemble(x, e.generation + n_steps, e.resample_count + int(resamples[:n_steps].sum()))
    return out, snaps[:n_snaps], resamples[:n_steps]


def fv_step(e: FVEnsemble, r: Region, cfg: SchemeConfig, p: ModelParams, seed: int,
            zero_noise: bool = False) -> FVEnsemble:
    """One propagation step of length ``cfg.dt`` followed by resampling of exited particles."""
    _check_inside(e.particles, r)
    return _advance(e, 1, r, cfg, p, seed, zero_noise=zero_noise)[0]


@dataclass
class FVResult:
    measure: EmpiricalMeasure
    lambda_rate: float
    ensemble: FVEnsemble
    resamples: np.ndarray
    dt: float


def fv_run(init, r: Region, M: int, T_burn: float, T_avg: float, cfg: SchemeConfig, p: ModelParams,
           seed: int, snap_dt: float | None = None, zero_noise: bool = False) -> FVResult:
    """Time-averaged empirical law over ``(T_burn, T_burn + T_avg]`` and the resampling-rate eigenvalue.

    ``init`` is one configuration (copied M times) or an ``(M, N)`` array.
    Snapshots are taken every ``snap_dt`` (default ``T_avg / 500``, at least one
    step). The rate estimate is resamples per particle per unit time over the
    averaging window.
    """
    if M < 2:
        raise InvalidParameter("M must be >= 2")
    if not (T_burn >= 0 and T_avg > 0):
        raise InvalidParameter("need T_burn >= 0 and T_avg > 0")
    init = np.asarray(init, dtype=float)
    x = np.tile(init, (M, 1)) if init.ndim == 1 else init
    if x.shape != (M, p.n_particles):
        raise InvalidParameter("initial ensemble must have shape (M, N)")
    r.validate(p.n_particles)
    _check_inside(x, r)
    n_burn = n_steps_for(T_burn, cfg.dt)
    n_avg = n_steps_for(T_avg, cfg.dt)
    every = max(1, int(round((snap_dt if snap_dt is not None else T_avg / 500) / cfg.dt)))
    n_snaps = n_avg // every
    e = FVEnsemble(x)
    if n_burn:
        e, _, _ = _advance(e, n_burn, r, cfg, p, seed, zero_noise=zero_noise)
    e, snaps, res = _advance(e, n_avg, r, cfg, p, seed, snap_every=every, n_snaps=n_snaps,
                             zero_noise=zero_noise)
    pooled = snaps.reshape(-1, p.n_particles)
    lam = res.sum() / (M * T_avg)
    return FVResult(EmpiricalMeasure.from_samples(pooled), float(lam), e, res, cfg.dt)


def resample_rate_lambda(resamples, M: int, dt: float) -> float:
    resamples = np.asarray(resamples)
    if resamples.size == 0:
        return math.nan
    return float(resamples.sum() / (M * dt * resamples.size))
