"""Counter-based, splittable random streams.

Every random draw in the package comes from a :class:`StreamId`, a key of
(master seed, purpose tag, run index).  The key is hashed into a Philox
counter-based generator, so two code paths handed the same id see exactly
the same numbers and there is no global state to leak between them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


def _tag_words(tag: str) -> list[int]:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


@dataclass(frozen=True)
class StreamId:
    seed: int
    tag: str = "default"
    index: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.index < 0:
            raise ValueError("seed and index must be non-negative")

    def generator(self) -> np.random.Generator:
        entropy = [self.seed & 0xFFFFFFFF, self.seed >> 32, *_tag_words(self.tag), self.index]
        key = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, tag: str, index: int = 0) -> "StreamId":
        return StreamId(self.seed, f"{self.tag}/{tag}", index)


def as_generator(stream) -> np.random.Generator:
    """Accept a StreamId or an already-built Generator."""
    if isinstance(stream, StreamId):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError(f"expected StreamId or numpy Generator, got {type(stream).__name__}")
