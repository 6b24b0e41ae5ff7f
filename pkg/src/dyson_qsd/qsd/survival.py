"""Exit times, survival curves and the principal eigenvalue of the killed process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from ..errors import InsufficientSurvivors, InvalidParameter, NonPositiveRate, NoSurvivors
from ..integrator import Path, SchemeConfig, simulate_ensemble
from ..model import ModelParams
from .measures import EmpiricalMeasure, statistic_values
from .regions import Region


def exit_time(path: Path, r: Region) -> float | None:
    """First grid time at which the path is outside ``r`` (0 if it starts outside)."""
    for k, x in enumerate(path.states):
        if not r.contains(x):
            return float(path.times[k])
    return None


@dataclass
class SurvivalCurve:
    times: np.ndarray
    survival: np.ndarray
    stderr: np.ndarray
    raw: np.ndarray
    n_paths: int

    @property
    def max_correction(self) -> float:
        return float(np.max(np.abs(self.survival - self.raw))) if self.raw.size else 0.0


def isotonic_decreasing(values, weights=None) -> np.ndarray:
    """Pool-adjacent-violators fit constrained to be weakly decreasing."""
    return optimize.isotonic_regression(values, weights=weights, increasing=False).x


def curve_from_exit_times(exit_times, times) -> SurvivalCurve:
    """Survival ``P[t < sigma]`` at ``times`` from per-path exit times (``inf`` = no exit)."""
    tau = np.asarray(exit_times, dtype=float)
    times = np.asarray(times, dtype=float)
    n = tau.size
    raw = (tau[None, :] > times[:, None] + 1e-12).mean(axis=1)
    fitted = np.clip(isotonic_decreasing(raw, np.full(raw.size, float(n))), 0.0, 1.0)
    se = np.sqrt(fitted * (1.0 - fitted) / n)
    return SurvivalCurve(times, fitted, se, raw, n)


def _initial_states(x0, n_paths: int, p: ModelParams) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        return np.tile(x0, (n_paths, 1))
    if x0.shape != (n_paths, p.n_particles):
        raise InvalidParameter("initial sample array must have shape (n_paths, N)")
    return x0


def sample_exit_times(x0, r: Region, T: float, n_paths: int, cfg: SchemeConfig, p: ModelParams,
                      seed: int, first_path: int = 0, workers=None) -> np.ndarray:
    """Exit times from ``r`` (``inf`` if not exited by ``T``) for ``n_paths`` independent paths."""
    x0s = _initial_states(x0, n_paths, p)
    for row in x0s[: min(n_paths, 1000)]:
        if not r.contains(row):
            raise InvalidParameter("initial states must lie in the region")
    res = simulate_ensemble(x0s, T, cfg, p, seed, first_path=first_path, region=r.validate(p.n_particles),
                            stop_on_exit=True, workers=workers)
    return res.exit_times()


def survival_curve(x0, r: Region, T: float, n_paths: int, cfg: SchemeConfig, p: ModelParams, seed: int,
                   times=None, workers=None) -> SurvivalCurve:
    """Monte Carlo ``P_x[t < sigma_U]`` on ``times`` (default: 101 points on [0, T]).

    ``x0`` is one configuration or an ``(n_paths, N)`` array of draws from the
    initial law.
    """
    times = np.linspace(0.0, T, 101) if times is None else np.asarray(times, dtype=float)
    if times.size and (times.min() < 0 or times.max() > T + 1e-12):
        raise InvalidParameter("curve times must lie in [0, T]")
    tau = sample_exit_times(x0, r, T, n_paths, cfg, p, seed, workers=workers)
    return curve_from_exit_times(tau, times)


def estimate_lambda(curve: SurvivalCurve, fit_window: tuple[float, float]) -> tuple[float, float]:
    """Least-squares slope of ``-log S(t)`` on the window; returns ``(lambda, r2)``."""
    lo, hi = fit_window
    sel = (curve.times >= lo) & (curve.times <= hi) & (curve.survival > 0)
    if sel.sum() < 3:
        raise InsufficientSurvivors(f"only {int(sel.sum())} usable points in [{lo}, {hi}]")
    t = curve.times[sel]
    y = -np.log(curve.survival[sel])
    fit = stats.linregress(t, y)
    r2 = fit.rvalue**2 if np.ptp(y) > 0 else 1.0
    if not fit.slope > 0:
        raise NonPositiveRate(f"fitted decay rate {fit.slope} is not positive")
    return float(fit.slope), float(r2)


def surviving_states(x0, r: Region, t: float, n_paths: int, cfg: SchemeConfig, p: ModelParams,
                     seed: int, first_path: int = 0, workers=None) -> np.ndarray:
    """States at time ``t`` of the paths that have not left ``r``, shape ``(survivors, N)``."""
    x0s = _initial_states(x0, n_paths, p)
    res = simulate_ensemble(x0s, t, cfg, p, seed, first_path=first_path, region=r.validate(p.n_particles),
                            stop_on_exit=True, record_times=(t,), workers=workers)
    rec = res.records[:, 0, :]
    return rec[~np.isnan(rec[:, 0])]


def conditioned_distribution(x0, r: Region, t: float, n_paths: int, statistic: str, edges,
                             cfg: SchemeConfig, p: ModelParams, seed: int, workers=None) -> EmpiricalMeasure:
    """Histogram of ``statistic`` under ``nu Q_t^U`` (paths conditioned on survival to ``t``)."""
    surv = surviving_states(x0, r, t, n_paths, cfg, p, seed, workers=workers)
    if surv.shape[0] == 0:
        raise NoSurvivors(f"no path survived to t={t}")
    return EmpiricalMeasure.from_values(statistic_values(surv, statistic), statistic, edges)
