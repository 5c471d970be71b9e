"""Counter-based random streams keyed by (master seed, experiment, trial).

Every Monte Carlo trial draws from its own Philox stream, so results do not
depend on how trials are spread over workers or in which order they finish.
"""

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError("stream key parts must be nonnegative")
    return part


def stream(master_seed: int, *key) -> np.random.Generator:
    """Independent generator for ``key`` under ``master_seed``.

    Key parts may be nonnegative ints or strings (hashed with CRC32).
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def seed_record(master_seed: int, *key) -> dict:
    return {"master_seed": int(master_seed), "key": [k if isinstance(k, str) else int(k) for k in key]}
