"""Per-path random substreams.

Path ``p`` of a run seeded with ``seed`` always draws from a Philox
generator keyed by ``(seed, p)`` with a zero counter, so a path's normals
do not depend on how paths are batched or spread over threads.
"""

from __future__ import annotations

import numpy as np

_MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= _MAX_SEED:
        raise ValueError(f"seed must lie in [0, 2**64 - 1], got {seed}")
    return seed


def path_generator(seed: int, path: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[check_seed(seed), path]))


def path_normals(seed: int, start: int, stop: int, n_steps: int) -> np.ndarray:
    """Standard normals for paths ``start..stop-1``, one row per path."""
    seed = check_seed(seed)
    out = np.empty((stop - start, n_steps))
    bit_gen = np.random.Philox(key=[seed, 0])
    gen = np.random.Generator(bit_gen)
    template = bit_gen.state
    counter = np.zeros(4, dtype=np.uint64)
    for row, path in enumerate(range(start, stop)):
        # rekeying one bit generator is much cheaper than building a new one
        template["state"] = {"counter": counter.copy(), "key": np.array([seed, path], dtype=np.uint64)}
        template["buffer_pos"] = 4
        template["has_uint32"] = 0
        template["uinteger"] = 0
        bit_gen.state = template
        out[row] = gen.standard_normal(n_steps)
    return out
