"""Named RNG substreams derived from one root seed.

Every stochastic component draws from its own labeled stream so that runs
reproduce bit-for-bit from a single configured seed, regardless of how many
components consume randomness or in which order they are constructed.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream_seed(root_seed: int, label: str) -> int:
    ss = np.random.SeedSequence([int(root_seed), zlib.crc32(label.encode())])
    return int(ss.generate_state(1)[0])


def substream(root_seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(substream_seed(root_seed, label))
