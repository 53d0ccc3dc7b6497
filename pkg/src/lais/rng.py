"""Deterministic random-stream derivation.

Every stochastic stage pulls from its own named stream derived from the
master seed plus an integer path (run index, stage tag, chain index).
Streams are counter-based (Philox), so results do not depend on how work
is scheduled across threads.
"""

import numpy as np

# Stage tags used when deriving stream paths.
STAGE_UPPER = 0
STAGE_LOWER = 1
STAGE_INIT = 2
STAGE_PARAMS = 3
STAGE_DATA = 4
STAGE_CLUSTER = 5


def derive_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Return a Generator for the stream named by ``(master_seed, *path)``.

    The same seed and path always give the same stream, independent of
    creation order or thread count.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(master_seed: int, *path: int) -> int:
    """Collapse a stream name to a single integer seed (for seeded APIs)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])
