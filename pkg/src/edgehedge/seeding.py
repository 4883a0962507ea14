"""Named random sub-streams derived from a single root seed."""

import zlib

import numpy as np

STREAMS = ("env", "learner-init", "learner-explore", "traces", "eval-env", "baselines")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; stable across runs and platforms."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
