"""Per-trajectory random generators.

Every random stream is derived from ``(base_seed, index, stream)`` through
``numpy.random.SeedSequence`` spawn keys and fed to the counter-based Philox
bit generator, so trajectory ``i`` draws the same numbers whether the ensemble
runs serially, on threads, or in a different order.
"""

from dataclasses import dataclass

import numpy as np

# Stream ids inside one trajectory
FIELD_STREAM = 0
DETECTION_STREAM = 1
COUPLED_STREAM = 2
DECODER_MC_STREAM = 3


@dataclass(frozen=True)
class SeedRecord:
    """Where a generator came from: base seed plus spawn key."""

    base_seed: int
    spawn_key: tuple = ()

    def sequence(self):
        return np.random.SeedSequence(entropy=int(self.base_seed), spawn_key=self.spawn_key)

    def generator(self):
        return np.random.Generator(np.random.Philox(self.sequence()))

    def derived_seed(self):
        """64-bit integer summarising this stream, recorded in run manifests."""
        return int(self.sequence().generate_state(1, dtype=np.uint64)[0])

    def as_dict(self):
        return {
            "base_seed": int(self.base_seed),
            "spawn_key": list(self.spawn_key),
            "derived_seed": self.derived_seed(),
        }


def as_seed_record(seed):
    """Accepts an int or a SeedRecord and returns a SeedRecord."""
    if isinstance(seed, SeedRecord):
        return seed
    if isinstance(seed, (int, np.integer)):
        if seed < 0:
            raise ValueError(f"Seed must be non-negative, got {seed}")
        return SeedRecord(int(seed))
    raise TypeError(f"Unsupported seed type: {type(seed).__name__}")


def trajectory_seed(base_seed, index, stream):
    """Seed record for stream `stream` of trajectory `index`."""
    return SeedRecord(int(base_seed), (int(index), int(stream)))


def make_rng(seed):
    return as_seed_record(seed).generator()
