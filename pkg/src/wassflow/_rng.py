"""Counter-based random streams.

Draw ``i`` of stream ``(seed, stream)`` is the ``i``-th 64-bit output of a
Philox generator keyed by the pair, so any block of draws can be produced
independently of the others and of evaluation order.
"""
import numpy as np
from scipy.special import ndtri

_HALF_ULP = 0.5 / 2.0**53

# stream ids
SAMPLING = 0
NOISE = 1


def uniforms(seed, start, n, stream=NOISE):
    """Open-interval uniforms for draws ``start .. start + n - 1``."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    key = (int(seed) % 2**64) | (int(stream) << 64)
    bitgen = np.random.Philox(key=key)
    # Philox advances in blocks of four 64-bit outputs
    block, offset = divmod(int(start), 4)
    if block:
        bitgen.advance(block)
    u = np.random.Generator(bitgen).random(int(n) + offset)[offset:]
    # shift off zero so that inverse CDFs stay finite
    return u + _HALF_ULP


def normals(seed, start, n, stream=NOISE):
    """Standard normals by inversion, one 64-bit draw each."""
    return ndtri(uniforms(seed, start, n, stream))
