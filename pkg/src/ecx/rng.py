"""Deterministic random substreams.

Every random draw in the package comes from a generator keyed by
``(seed, *path)`` so that sweep replicates can be generated in any order or in
parallel and still produce identical matrices.
"""

from __future__ import annotations

import numpy as np

ROLES = {
    "r_base": 0,
    "q_base": 1,
    "r_noise": 2,
    "q_noise": 3,
    "preferences": 4,
    "labor": 5,
    "init": 6,
    "misc": 7,
}


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Return an independent PCG64 generator for ``seed`` and a key path.

    String path elements are mapped through ``ROLES``.
    """
    key = tuple(ROLES[p] if isinstance(p, str) else int(p) for p in path)
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))
