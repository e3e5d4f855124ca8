"""
Counter-based random streams

Each replicate gets its own Philox generator keyed by (seed, domain,
stream_id). Streams never share state, so results do not depend on which
worker runs a replicate or in which order.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

U64 = 2**64


def _domain_key(seed: int, domain: str) -> int:
    digest = hashlib.blake2b(f"{domain}:{seed}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngStream:
    """
    Independent random stream for one task

    Attributes:
        seed: Run seed (unsigned 64-bit)
        stream_id: Replicate index (unsigned 64-bit)
        domain: Purpose label separating e.g. null replicates from power replicates
    """

    seed: int
    stream_id: int
    domain: str = "replicate"

    def __post_init__(self):
        if not 0 <= self.seed < U64 or not 0 <= self.stream_id < U64:
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        """Fresh generator at the start of this stream"""
        key = np.array([_domain_key(self.seed, self.domain), self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, domain: str) -> "RngStream":
        """Stream with the same id in another domain"""
        return RngStream(self.seed, self.stream_id, f"{self.domain}/{domain}")
