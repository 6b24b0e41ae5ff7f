"""Time stepping for the ordered particle system.

The singular reflection term is replaced by its absolutely continuous form
``dK = grad V_I(X) dt``, so all schemes discretise

    dX = -grad V_c(X) dt - grad V_I(X) dt + dB.

Three schemes are available:

``sorted_tamed_explicit``
    explicit Euler with each drift component clipped to ``taming_cap/sqrt(dt)``,
    followed by sorting the coordinates (a discrete reflection).
``gap_implicit``
    confining drift and noise explicit, interaction fully implicit, i.e. the
    new state is the proximal point of ``dt * V_I`` at the explicit
    prediction. Strictly ordered for every ``gamma > 0``; for two particles it
    is the positive root of ``g' = g + 2 gamma dt / g'``.
``yosida_penalized``
    explicit Euler on the Lipschitz drift ``-grad V_c(x) - n (x - prox_n(x))``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import multiprocessing as mp

import numpy as np

from . import _kernels as K
from .errors import InvalidParameter, ProxNoConvergence
from .model import ModelParams, as_configuration
from .rng import NoiseStream, seed_key

SCHEMES = {
    "sorted_tamed_explicit": K.SORTED_TAMED,
    "gap_implicit": K.GAP_IMPLICIT,
    "yosida_penalized": K.YOSIDA,
}


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "sorted_tamed_explicit"
    dt: float = 1e-4
    taming_cap: float = 2.0
    prox_tol: float = 1e-9
    penalty_n: int = 100

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidParameter(f"unknown scheme {self.scheme!r}")
        for name in ("dt", "taming_cap", "prox_tol"):
            val = getattr(self, name)
            if not (val > 0) or not math.isfinite(val):
                raise InvalidParameter(f"{name} must be positive, got {val}")
        if int(self.penalty_n) != self.penalty_n or self.penalty_n < 1:
            raise InvalidParameter(f"penalty_n must be a positive integer, got {self.penalty_n}")

    @property
    def code(self) -> int:
        return SCHEMES[self.scheme]

    def kernel_args(self, p: ModelParams) -> tuple:
        return (self.dt, self.code, p.vspec.a, p.gamma, self.taming_cap,
                float(self.penalty_n), self.prox_tol)


@dataclass
class Path:
    times: np.ndarray
    states: np.ndarray
    crossings: np.ndarray
    k_increments: np.ndarray | None = None
    dt: float = field(default=0.0)
    # randomised bridge test per step (see collision.first_collision_time)
    bridge_hits: np.ndarray | None = None

    @property
    def n_particles(self) -> int:
        return self.states.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def n_steps_for(T: float, dt: float) -> int:
    if T < 0:
        raise InvalidParameter("horizon must be nonnegative")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise InvalidParameter(f"T={T} is not an integer multiple of dt={dt}")
    return n


def step(x, cfg: SchemeConfig, p: ModelParams, noise) -> np.ndarray:
    """One step of ``cfg.scheme`` with noise given as standard normals.

    ``noise`` holds the N standard normals; the scheme multiplies them by
    ``sqrt(dt)``.
    """
    x = as_configuration(x, p.n_particles)
    xi = np.asarray(noise, dtype=float).reshape(-1)
    out = np.empty_like(x)
    work = np.empty_like(x)
    kinc = np.empty_like(x)
    flag = K.step_into(x, xi, *cfg.kernel_args(p), out, work, kinc, K.new_workspace(x.size))
    if flag < 0:
        raise ProxNoConvergence("proximal Newton solve did not converge", step_index=0)
    return out


def moreau_prox(x, n: float, gamma: float, tol: float = 1e-9) -> np.ndarray:
    """Moreau-Yosida proximal point ``argmin_y V_I(y) + n |x - y|^2 / 2``.

    ``x`` may be any real vector (unsorted, with ties); the result is strictly
    increasing. The penalised interaction drift is ``n * (prox(x) - x)``.
    """
    if not n >= 1:
        raise InvalidParameter("n must be >= 1")
    if not gamma > 0:
        raise InvalidParameter("gamma must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.empty_like(x)
    if K.prox(x, float(n), float(gamma), float(tol), y, K.new_workspace(x.size)) < 0:
        raise ProxNoConvergence(f"prox did not reach tolerance {tol} in {K.PROX_MAXIT} iterations")
    return y


def simulate_path(x0, T: float, cfg: SchemeConfig, p: ModelParams, stream: NoiseStream,
                  record_k: bool = False) -> Path:
    x0 = as_configuration(x0, p.n_particles)
    n_steps = n_steps_for(T, cfg.dt)
    n = x0.size
    states = np.empty((n_steps + 1, n))
    crossings = np.zeros(n_steps + 1, dtype=bool)
    bridge_hits = np.zeros(n_steps + 1, dtype=bool)
    # a 0-row buffer tells the kernel not to record dK
    kincs = np.empty((n_steps, n)) if record_k else np.empty((0, n))
    k0, k1 = stream.key
    if n_steps:
        fail = K.simulate_single(x0, n_steps, *cfg.kernel_args(p), k0, k1, stream.path_index,
                                 stream.substeps, stream.scale, states, crossings, bridge_hits, kincs)
        if fail >= 0:
            raise ProxNoConvergence(f"proximal solve failed at step {fail}", step_index=fail)
    else:
        states[0] = x0
    times = np.arange(n_steps + 1) * cfg.dt
    return Path(times, states, crossings, kincs if record_k else None, cfg.dt, bridge_hits)


@dataclass
class CoupledPaths:
    x: Path
    y: Path

    @property
    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.x.states - self.y.states, axis=1)


def coupled_pair(x0, y0, T: float, cfg: SchemeConfig, p: ModelParams, stream: NoiseStream) -> CoupledPaths:
    """Two paths driven by the same Brownian increments (synchronous coupling)."""
    return CoupledPaths(simulate_path(x0, T, cfg, p, stream), simulate_path(y0, T, cfg, p, stream))


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleResult:
    """Per-path stopping information from :func:`simulate_ensemble`.

    Steps are grid indices (time = step * dt); -1 means the event did not
    happen within the horizon.
    """

    dt: float
    n_steps: int
    path_ids: np.ndarray
    exit_step: np.ndarray
    collision_step: np.ndarray
    record_steps: np.ndarray
    records: np.ndarray

    @property
    def record_times(self) -> np.ndarray:
        return self.record_steps * self.dt

    def exit_times(self) -> np.ndarray:
        return np.where(self.exit_step >= 0, self.exit_step * self.dt, np.inf)

    def collision_times(self) -> np.ndarray:
        return np.where(self.collision_step >= 0, self.collision_step * self.dt, np.inf)


def _ensemble_chunk(args):
    (x0s, path_ids, n_steps, kargs, key, substeps, scale, region_args, coll_thr, bridge,
     stop_on_exit, stop_on_collision, record_steps) = args
    m, n = x0s.shape
    rec = np.empty((m, record_steps.size, n))
    exit_step = np.empty(m, dtype=np.int64)
    coll_step = np.empty(m, dtype=np.int64)
    fail_step = np.empty(m, dtype=np.int64)
    K.run_ensemble(x0s, path_ids, n_steps, *kargs, key[0], key[1], substeps, scale,
                   *region_args, coll_thr, bridge, stop_on_exit, stop_on_collision,
                   record_steps, rec, exit_step, coll_step, fail_step)
    return exit_step, coll_step, fail_step, rec


_NO_REGION = (K.REGION_NONE, np.zeros(1), np.zeros(1), 0.0, 0.0)


def map_chunks(fn, jobs: list, workers: int) -> list:
    """Run ``fn`` over ``jobs``, in a process pool when ``workers > 1``; order is preserved."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, jobs))


def default_workers() -> int:
    return int(os.environ.get("DYSON_QSD_WORKERS", "1"))


def simulate_ensemble(x0s, T: float, cfg: SchemeConfig, p: ModelParams, seed: int, *,
                      first_path: int = 0, substeps: int = 1, zero_noise: bool = False,
                      region=None, collision_threshold: float = -1.0, bridge: bool = False,
                      stop_on_exit: bool = False, stop_on_collision: bool = False,
                      record_times=(), workers: int | None = None) -> EnsembleResult:
    """Simulate many independent paths with fused exit/collision detection.

    ``x0s`` is either one configuration (broadcast) or an ``(M, N)`` array.
    Path ``i`` uses noise path index ``first_path + i``. ``collision_threshold``
    below zero disables the gap test (raw-update crossings are still caught);
    ``bridge`` adds the randomised Bessel-bridge test for hits between grid points.
    """
    x0s = np.asarray(x0s, dtype=float)
    if x0s.ndim == 1:
        raise InvalidParameter("pass an (M, N) array; use np.tile to broadcast one configuration")
    for row in x0s[: min(len(x0s), 1000)]:
        as_configuration(row, p.n_particles)
    n_steps = n_steps_for(T, cfg.dt)
    rs = np.array(sorted({int(round(t / cfg.dt)) for t in record_times}), dtype=np.int64)
    if rs.size and (rs.max() > n_steps or rs.min() < 0):
        raise InvalidParameter("record times must lie in [0, T]")
    m = x0s.shape[0]
    path_ids = np.arange(first_path, first_path + m, dtype=np.int64)
    region_args = region.kernel_args(p.n_particles) if region is not None else _NO_REGION
    workers = default_workers() if workers is None else workers
    nchunks = max(1, min(m, workers))
    bounds = np.linspace(0, m, nchunks + 1).astype(int)
    stream_key = seed_key(seed)
    jobs = [
        (np.ascontiguousarray(x0s[lo:hi]), path_ids[lo:hi], n_steps, cfg.kernel_args(p), stream_key,
         substeps, 0.0 if zero_noise else 1.0, region_args, float(collision_threshold), bool(bridge),
         bool(stop_on_exit), bool(stop_on_collision), rs)
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ]
    parts = map_chunks(_ensemble_chunk, jobs, workers)
    exit_step = np.concatenate([q[0] for q in parts])
    coll_step = np.concatenate([q[1] for q in parts])
    fail_step = np.concatenate([q[2] for q in parts])
    rec = np.concatenate([q[3] for q in parts])
    if np.any(fail_step >= 0):
        i = int(np.argmax(fail_step >= 0))
        raise ProxNoConvergence(f"proximal solve failed on path {path_ids[i]} at step {fail_step[i]}",
                                step_index=int(fail_step[i]))
    return EnsembleResult(cfg.dt, n_steps, path_ids, exit_step, coll_step, rs, rec)
