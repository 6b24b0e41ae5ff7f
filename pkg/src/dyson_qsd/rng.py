"""Counter-addressed noise.

There is no global generator: every Gaussian increment is looked up by
``(seed, stream, path_index, step_index, coordinate)`` in a Philox4x32-10
keyed by the 64-bit seed. Results therefore do not depend on how paths are
split across workers or in which order they run.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K


def seed_key(seed: int) -> tuple[np.uint64, np.uint64]:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def philox4x32(counter, key) -> tuple[int, int, int, int]:
    """Raw Philox4x32-10 block (exposed for known-answer tests)."""
    c = [np.uint64(v & 0xFFFFFFFF) for v in counter]
    k = [np.uint64(v & 0xFFFFFFFF) for v in key]
    return tuple(int(v) for v in K.philox4x32(c[0], c[1], c[2], c[3], k[0], k[1]))


@dataclass(frozen=True)
class NoiseStream:
    """Addresses the Brownian increments of one path.

    ``substeps`` aggregates that many base increments per step, which is how a
    run at ``dt`` is coupled to a run at ``dt / substeps``. ``zero=True`` is a
    test hook that replaces every increment by 0.
    """

    seed: int
    path_index: int = 0
    substeps: int = 1
    zero: bool = False

    def __post_init__(self):
        seed_key(self.seed)
        if self.path_index < 0:
            raise ValueError("path_index must be nonnegative")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def key(self):
        return seed_key(self.seed)

    @property
    def scale(self) -> float:
        return 0.0 if self.zero else 1.0

    def with_path(self, path_index: int) -> "NoiseStream":
        return replace(self, path_index=int(path_index))

    def normals(self, step_index: int, n: int) -> np.ndarray:
        """Standard normals for one step (multiply by ``sqrt(dt)`` for increments)."""
        out = np.empty(n)
        k0, k1 = self.key
        K.fill_noise(k0, k1, self.path_index, int(step_index), self.substeps, self.scale, out)
        return out

    def normals_block(self, n_steps: int, n: int) -> np.ndarray:
        k0, k1 = self.key
        return K.noise_matrix(k0, k1, self.path_index, int(n_steps), self.substeps, self.scale, n)


def gaussian(seed: int, path_index: int, step_index: int, coordinate: int) -> float:
    """The single base increment addressed by the four values (unit variance)."""
    k0, k1 = seed_key(seed)
    z0, z1 = K.normal_pair(k0, k1, K.STREAM_BROWNIAN, int(path_index), int(step_index), coordinate // 2)
    return float(z1 if coordinate % 2 else z0)


def resample_uniforms(seed: int, generation: int, particles) -> np.ndarray:
    k0, k1 = seed_key(seed)
    return K.uniform_matrix(k0, k1, K.STREAM_RESAMPLE, np.asarray(particles, dtype=np.int64), int(generation))


def host_generator(seed: int, stream: int) -> np.random.Generator:
    """Numpy generator for host-side draws (initial ensembles, resampling of estimates)."""
    k0, k1 = seed_key(seed)
    return np.random.Generator(np.random.Philox(key=[int(k0) | (int(k1) << 32), 0x5EED0000 + int(stream)]))
