"""Fast invariant suite behind ``dyson-qsd validate``.

Each check is a small deterministic computation returning ``(passed, detail)``;
the statistical acceptance experiments live in the test suite instead.
"""

from __future__ import annotations

import math

import numpy as np

from . import model as M
from .collision import besq_hitting_law, besq_hitting_oracle, ks_censored
from .integrator import SchemeConfig, moreau_prox, simulate_path, step
from .qsd.measures import EmpiricalMeasure, tv_distance
from .qsd.oracles import beta_ensemble_moment_oracle, ou_killed_oracle
from .qsd.survival import SurvivalCurve, estimate_lambda
from .rng import NoiseStream, host_generator, philox4x32


def _model_examples(rng):
    p = M.ModelParams(2, 0.25, M.VSpec.quadratic(0.5))
    ok = np.allclose(M.interaction_grad([0, 1], 0.25), [0.25, -0.25])
    ok &= np.allclose(M.interaction_grad([0, 1, 3], 0.5), [2 / 3, -1 / 4, -5 / 12])
    ok &= math.isclose(M.energy([0, 2], p), 2 - 0.25 * math.log(2), rel_tol=1e-12)
    ok &= M.energy([1, 1], p) == math.inf
    ok &= math.isclose(M.lyapunov_ratio([0, 0], 1.0, p), 1.25)
    ok &= math.isclose(M.lyapunov_ratio([3, 4], 1.0, p), -11.25)
    return bool(ok), "hand-evaluated potentials, gradients and Lyapunov ratios"


def _antisymmetry(rng):
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 8))
        x = np.sort(rng.normal(size=n) * 3)
        g = M.interaction_grad(x, 0.7)
        bound = 8 * np.finfo(float).eps * 0.7 * n * n / np.diff(x).min()
        worst = max(worst, abs(g.sum()) / bound)
    return worst <= 1.0, f"max |sum| / bound = {worst:.3g}"


def _lyapunov_forms(rng):
    worst = 0.0
    p = M.ModelParams(4, 0.3, M.VSpec.quadratic(0.7))
    for _ in range(100):
        x = np.sort(rng.normal(size=4) * 2)
        a = M.lyapunov_ratio(x, 0.8, p)
        b = M.lyapunov_ratio_direct(x, 0.8, p)
        worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    return worst < 1e-10, f"max relative difference {worst:.3g}"


def _prox(rng):
    y = moreau_prox([0.3, 0.3], 100, 0.25)
    ok = math.isclose(y[1] - y[0], 2 * math.sqrt(0.25 / 200), rel_tol=1e-12)
    worst = 0.0
    for _ in range(50):
        x = rng.normal(size=4)
        z = rng.normal(size=4)
        fx = 50 * (x - moreau_prox(x, 50, 0.4))
        fz = 50 * (z - moreau_prox(z, 50, 0.4))
        ok &= float((fx - fz) @ (x - z)) >= -1e-9
        worst = max(worst, np.linalg.norm(fx - fz) / (50 * np.linalg.norm(x - z)))
    return bool(ok and worst <= 1 + 1e-9), f"monotone, Lipschitz ratio {worst:.4f}"


def _steps(rng):
    p1 = M.ModelParams(1, 0.25, M.VSpec.quadratic(0.5))
    ok = np.allclose(step([1.0], SchemeConfig(dt=0.01), p1, [0.0]), [0.99])
    p2 = M.ModelParams(2, 0.25, M.VSpec.quadratic(0.5))
    ok &= np.allclose(step([0.0, 1.0], SchemeConfig(dt=0.001), p2, [0.0, 0.0]), [-0.00025, 0.99925])
    x = step([0.0, 0.0], SchemeConfig("gap_implicit", dt=1e-4), p2, [0.3, -0.2])
    ok &= x[1] > x[0]
    return bool(ok), "one-step examples and strict ordering of the implicit scheme"


def _determinism(rng):
    p = M.ModelParams(3, 0.25, M.VSpec.quadratic(0.5))
    a = simulate_path([-1, 0, 1], 0.1, SchemeConfig(), p, NoiseStream(99, 4))
    b = simulate_path([-1, 0, 1], 0.1, SchemeConfig(), p, NoiseStream(99, 4))
    return bool(np.array_equal(a.states, b.states)), "repeated path is bit-identical"


def _philox(rng):
    got = philox4x32((0, 0, 0, 0), (0, 0))
    return got == (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8), "Philox4x32-10 known answer"


def _oracles(rng):
    lam = ou_killed_oracle((0.0, math.pi), 0.0, 1000).lam
    m = beta_ensemble_moment_oracle(0.25, 0.5, "sum_sq")
    ok = abs(lam - 0.5) < 1e-5 and abs(m - 1.0) < 1e-6
    return ok, f"Brownian Dirichlet eigenvalue {lam:.7f}, E[(x1+x2)^2] {m:.9f}"


def _estimators(rng):
    t = np.linspace(0, 3, 31)
    s = 0.3 * np.exp(-2 * t)
    lam, r2 = estimate_lambda(SurvivalCurve(t, s, np.zeros_like(t), s, 1), (0, 3))
    edges = np.array([0.0, 1.0, 2.0])
    tv = tv_distance(EmpiricalMeasure(statistic="s", edges=edges, masses=[0.5, 0.5]),
                     EmpiricalMeasure(statistic="s", edges=edges, masses=[0.25, 0.75]))
    ok = abs(lam - 2) < 1e-9 and abs(r2 - 1) < 1e-9 and abs(tv - 0.25) < 1e-12
    return ok, f"lambda {lam:.9f}, r2 {r2:.9f}, tv {tv}"


def _besq_oracle(rng):
    s = besq_hitting_oracle(1.5, 1.0, 2000, dt=1e-2, horizon=4.0, seed=int(rng.integers(1 << 31)))
    d = ks_censored(s, besq_hitting_law(1.5, 1.0).cdf, 4.0)
    return d < 0.05, f"KS vs closed form {d:.4f} (2000 samples)"


CHECKS = {
    "model_examples": _model_examples,
    "interaction_antisymmetry": _antisymmetry,
    "lyapunov_two_formulas": _lyapunov_forms,
    "prox_properties": _prox,
    "step_examples": _steps,
    "path_determinism": _determinism,
    "philox_known_answer": _philox,
    "deterministic_oracles": _oracles,
    "estimator_examples": _estimators,
    "besq_oracle_closed_form": _besq_oracle,
}


def run_checks(seed: int = 0) -> dict:
    rng = host_generator(seed, 11)
    out = {}
    for name, fn in CHECKS.items():
        passed, detail = fn(rng)
        out[name] = {"passed": bool(passed), "detail": detail}
    return out
