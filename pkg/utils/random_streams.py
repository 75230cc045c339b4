"""
Counter-based random streams for reproducible, worker-independent replications
"""
from typing import List, Optional

import numpy as np

UINT64_LIMIT = 2 ** 64
DEFAULT_BLOCK_SIZE = 4096


class RandomStream:
    """Sequential uniform variates served from blocks drawn ahead.

    Every consumer in the simulation (arm selection, Bernoulli sampling,
    worst-case good-arm draws) reads exactly one variate per call to
    ``uniform``; ``Generator.random(n)`` yields the same doubles as n
    sequential draws, so block size never changes a run.
    """

    def __init__(self, generator: np.random.Generator, block_size: int = DEFAULT_BLOCK_SIZE,
                 master_seed: Optional[int] = None, index: Optional[int] = None):
        if block_size < 1:
            raise ValueError("block_size must be positive")
        self.generator = generator
        self.block_size = block_size
        self.master_seed = master_seed
        self.index = index
        self._block: List[float] = []
        self._pos = 0
        self.consumed = 0

    def uniform(self) -> float:
        """Next variate in [0, 1)"""
        if self._pos >= len(self._block):
            self._block = self.generator.random(self.block_size).tolist()
            self._pos = 0
        value = self._block[self._pos]
        self._pos += 1
        self.consumed += 1
        return value

    def uniforms(self, n: int) -> np.ndarray:
        """Next n variates, in stream order"""
        out = np.empty(n)
        for i in range(n):
            out[i] = self.uniform()
        return out

    def __repr__(self) -> str:
        return f"RandomStream(master_seed={self.master_seed}, index={self.index}, consumed={self.consumed})"


def _check_uint64(name: str, value: int) -> int:
    value = int(value)
    if not 0 <= value < UINT64_LIMIT:
        raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")
    return value


def derive(master_seed: int, replication_index: int, block_size: int = DEFAULT_BLOCK_SIZE) -> RandomStream:
    """
    Derive the stream owned by one replication

    Args:
        master_seed: 64-bit experiment seed
        replication_index: 64-bit replication (or instance) index

    Returns:
        A Philox stream keyed by (master_seed, replication_index); any worker
        can recreate it from the pair alone
    """
    master_seed = _check_uint64("master_seed", master_seed)
    replication_index = _check_uint64("replication_index", replication_index)
    key = np.array([master_seed, replication_index], dtype=np.uint64)
    generator = np.random.Generator(np.random.Philox(key=key))
    return RandomStream(generator, block_size=block_size, master_seed=master_seed, index=replication_index)
