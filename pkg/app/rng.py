"""Counter-based random streams keyed by (seed, purpose, node, iteration)"""

from enum import IntEnum

import numpy as np

RandomStream = np.random.Generator


class StreamPurpose(IntEnum):
    """Which consumer a stream belongs to; keeps streams of one node disjoint"""
    gradient = 1
    worker_compression = 2
    master_compression = 3
    variance = 4
    data = 5


def random_stream(
    seed: int,
    purpose: StreamPurpose,
    node: int = 0,
    iteration: int = 0,
    stream: int = 0,
) -> RandomStream:
    """
    Open the Philox stream for one (seed, purpose, node, iteration) cell.

    The key is the global seed and the counter's upper words encode the cell,
    so the sequence a worker sees never depends on scheduling or thread count.

    Args:
        seed: Global run seed
        purpose: Consumer of the stream
        node: Worker index (the master uses 0 with its own purpose)
        iteration: Iteration index
        stream: Extra logical stream id (CompressorSpec.seed_stream)

    Returns:
        A numpy Generator positioned at the start of the cell
    """
    if min(seed, node, iteration, stream) < 0:
        raise ValueError("seed, node, iteration and stream must be nonnegative")
    counter = np.array(
        [0, (int(purpose) << 32) | stream, node, iteration],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))
