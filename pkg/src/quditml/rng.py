"""Named, counter-based random streams.

Every source of randomness in a run (parameter init, data sampling, shot
sampling) gets its own Philox stream derived from the 64-bit run seed and a
fixed stream name, so results are reproducible independent of evaluation
order or scheduling.
"""

import numpy as np

_STREAM_IDS = {
    "init": 0,   # parameter initialization
    "data": 1,   # dataset sampling, splits, label/encoding permutations
    "shots": 2,  # measurement-shot sampling
}

_MASK64 = (1 << 64) - 1


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the named Philox stream for a run seed.

    The (seed, name) pair fully determines the stream; distinct names give
    statistically independent streams for the same seed.
    """
    try:
        stream_id = _STREAM_IDS[name]
    except KeyError:
        raise ValueError(f"unknown stream name {name!r}; expected one of {sorted(_STREAM_IDS)}")
    key = np.array([seed & _MASK64, stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
