"""Counter-based random streams.

Every draw in the package comes from a Philox generator whose 128-bit key
is derived from a run seed and whose counter carries the logical coordinates
of the draw (tick, node, substep, ...). Two streams with different
coordinates never overlap, and the values a node receives at a tick do not
depend on the order in which nodes are visited.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream tags; kept stable because they are part of the reproducibility contract.
REACT = 1
DIFFUSE_S = 2
DIFFUSE_I = 3
TOPOLOGY = 10
THETA = 11


@lru_cache(maxsize=4096)
def _key(seed: int) -> tuple[int, int]:
    state = np.random.SeedSequence(int(seed) & ((1 << 128) - 1)).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def stream(seed: int, tag: int, a: int = 0, b: int = 0) -> np.random.Generator:
    """Generator for the coordinates ``(tag, a, b)`` under ``seed``.

    Counter word 0 is left at zero and is what Philox increments while
    drawing, so distinct coordinates cannot collide.
    """
    k0, k1 = _key(seed)
    key = np.array([k0, k1], dtype=np.uint64)
    counter = np.array([0, int(tag) & _MASK64, int(a) & _MASK64, int(b) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def derive_seed(seed: int, *path: int | str) -> int:
    """Child seed for a named sub-experiment, e.g. ``derive_seed(s, "real", 3)``."""
    words = [int(seed) & _MASK64]
    for item in path:
        if isinstance(item, str):
            words.extend(item.encode("utf-8"))
        else:
            words.append(int(item) & _MASK64)
    state = np.random.SeedSequence(words).generate_state(2, np.uint64)
    return (int(state[0]) << 64 | int(state[1])) >> 1
