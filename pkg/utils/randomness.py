"""
Named, splittable random streams derived from one root seed.

Every party draws from its own stream, so plugging an attack in (which only
consumes the `adversary` stream) never shifts the honest parties' draws.
Stream derivation is fixed: stream `name` of segment `path` is
`numpy.random.SeedSequence(entropy=seed, spawn_key=path + (STREAM_NAMES.index(name),))`.
"""

from typing import Dict, Tuple

import numpy as np

STREAM_NAMES = (
    "preparation",  # TP: swap plans and prepared states
    "alice",        # Alice: operation choices and measurement outcomes
    "bob",          # Bob: operation choices and measurement outcomes
    "selection",    # public coin of Alice and Bob (check-group selection)
    "tp",           # TP: measurement outcomes and publication coins
    "adversary",    # Eve, or the insider acting as Eve
    "secrets",      # random secrets when `random` is requested
    "shots",        # circuit scenarios
)

# path prefixes for derived segments
TRIAL_SEGMENT = 1
RETRY_SEGMENT = 2
BATCH_SEGMENT = 3

MAX_SEED = 2 ** 64 - 1


class RandomStreams:
    """Lazily created numpy Generators keyed by stream name"""

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        if not 0 <= int(seed) <= MAX_SEED:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self._generators: Dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in STREAM_NAMES:
            raise KeyError(f"Unknown random stream: {name}")
        if name not in self._generators:
            sequence = np.random.SeedSequence(
                entropy=self.seed, spawn_key=self.path + (STREAM_NAMES.index(name),)
            )
            self._generators[name] = np.random.default_rng(sequence)
        return self._generators[name]

    def segment(self, kind: int, index: int) -> "RandomStreams":
        """Independent family of streams, e.g. for trial `index` of an evaluation"""
        return RandomStreams(self.seed, self.path + (kind, index))

    def trial(self, index: int) -> "RandomStreams":
        return self.segment(TRIAL_SEGMENT, index)

    def retry(self, attempt: int) -> "RandomStreams":
        return self.segment(RETRY_SEGMENT, attempt)

    def __repr__(self) -> str:
        return f"RandomStreams(seed={self.seed}, path={self.path})"
