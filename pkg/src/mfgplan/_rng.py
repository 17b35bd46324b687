"""Counter-based Gaussian streams for reproducible parallel simulation.

Every stream is a Philox generator keyed by (seed, purpose, counter), so any
value is a pure function of its key. Noise for step k of a run is drawn in
one vectorized call whose p-th element belongs to path p; the result is
bitwise independent of how paths are later chunked across workers.
"""

from __future__ import annotations

import numpy as np

# purpose tags keep independent streams from colliding on the same seed
STEP_NOISE = 101
INIT_PERMUTATION = 211
AUX_BROWNIAN = 307


def _generator(seed: int, purpose: int, counter: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**63 - 1), spawn_key=(purpose, counter))
    return np.random.Generator(np.random.Philox(seed=ss))


def step_normals(seed: int, step: int, n_paths: int, purpose: int = STEP_NOISE) -> np.ndarray:
    """Standard normals G[p] for path p at the given step."""
    return _generator(seed, purpose, step).standard_normal(n_paths)


def init_permutation(seed: int, n_paths: int) -> np.ndarray:
    """Deterministic shuffle assigning stratified initial points to paths."""
    return _generator(seed, INIT_PERMUTATION).permutation(n_paths)
