"""Deterministic random-stream derivation.

Every stochastic stage draws from a generator derived from the run seed and
a structured key (stage id, period, realization, ...). Streams are therefore
independent of execution order and worker count, and a resumed run replays
the exact streams of an uninterrupted one.
"""

from __future__ import annotations

import numpy as np

# Stage identifiers used as the first component of a spawn key.
STAGE_PRIOR = 1
STAGE_TRUTH = 2
STAGE_SAMPLE = 3
STAGE_GIBBS = 4
STAGE_ESMDA = 5
STAGE_THRESHOLDS = 6
STAGE_GRADES = 7
STAGE_OBS_NOISE = 8
STAGE_GRADE_PRIOR = 9


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Return a Generator for (seed, key) that never collides across keys."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
