"""Simulation of ordered particle systems with logarithmic repulsion and collisions.

Submodules: ``model`` (potentials, Lyapunov diagnostics), ``integrator``
(time stepping, ensembles), ``collision`` (collision times, Bessel comparison),
``qsd`` (killed process, Fleming-Viot, oracles) and ``cli``.
"""

__version__ = "0.1.0"

from .errors import DysonQSDError  # noqa: F401
from .model import ModelParams, Regime, VSpec  # noqa: F401
from .integrator import SchemeConfig, simulate_path  # noqa: F401
from .rng import NoiseStream  # noqa: F401
