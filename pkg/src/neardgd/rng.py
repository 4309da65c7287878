"""Named, independent random streams derived from one integer seed.

Every random draw in the package goes through :func:`stream`. A stream is a
PCG64 generator seeded by ``SeedSequence(seed, spawn_key=(index,))`` where
``index`` is fixed per name below, so the data, planted solutions and initial
iterates never share state and adding draws to one stream leaves the others
unchanged.
"""
import numpy as np

STREAMS = {
    "matrix": 0,   # problem data: h_i blocks, offsets b_i
    "planted": 1,  # planted solutions x~_i
    "init": 2,     # initial iterates x_{i,0}
    "battery": 3,  # verification sampling
}


def stream(seed: int, name: str) -> np.random.Generator:
    try:
        key = STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown random stream {name!r}") from None
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))
