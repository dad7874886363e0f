"""Counter-based random number streams.

Every random draw in the package comes from a Philox counter-based
generator keyed by ``(seed, stream, index)``.  Because the key fully
determines the stream, results are reproducible no matter how work is
partitioned across worker processes.
"""

import numpy as np

# Stream tags keep independent uses of the same user seed from colliding.
STREAM_SHIFT = 1  # one stream per random shift of a lattice rule
STREAM_MC = 2  # plain Monte Carlo sample matrix
STREAM_KL = 3  # random test matrix of the eigensolver
STREAM_PROBE = 4  # property-test probes


def philox_generator(seed, stream, index=0):
    """Return a ``numpy.random.Generator`` for the given (seed, stream, index).

    Parameters
    ----------
    seed : int
        User-facing study seed.
    stream : int
        One of the ``STREAM_*`` tags above.
    index : int, optional
        Sub-index inside the stream, e.g. the shift number.
    """
    key = np.array(
        [np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF),
         (np.uint64(stream) << np.uint64(48)) ^ np.uint64(index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
