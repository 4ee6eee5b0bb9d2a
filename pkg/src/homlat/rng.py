"""Counter-based random number plumbing.

Every random quantity in this package is a pure function of a 64-bit key and a
64-bit counter, obtained from the splitmix64 finalizer. Environments hash an
edge identifier, walks hash a step counter. This buys exact reproducibility:
the value of an edge does not depend on the order of discovery, on chunking,
or on the number of workers, so lazy, eager, and periodized sampling of the
same seed agree edge for edge.

Scalar arithmetic runs on Python ints masked to 64 bits (numpy uint64 scalars
warn on wraparound; arrays do not, so the vectorized paths stay in numpy).
The same arithmetic is re-implemented inside the numba kernels; tests pin the
three against each other.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_INT = 0x9E3779B97F4A7C15
GOLDEN = np.uint64(GOLDEN_INT)

# domain separation salts for key derivation
ENV_STREAM = 0xE5
TRAJ_STREAM = 0x77
SURROGATE_STREAM = 0x5A

_M1_INT = 0xBF58476D1CE4E5B9
_M2_INT = 0x94D049BB133111EB
_M1 = np.uint64(_M1_INT)
_M2 = np.uint64(_M2_INT)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 2.0**-53


def mix64_int(z: int) -> int:
    """splitmix64 finalizer on a Python int, masked to 64 bits."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1_INT) & MASK64
    z = ((z ^ (z >> 27)) * _M2_INT) & MASK64
    return z ^ (z >> 31)


def mix64(x):
    """splitmix64 finalizer; elementwise on uint64 arrays, exact on scalars."""
    if np.ndim(x) == 0:
        return np.uint64(mix64_int(int(x)))
    x = x.astype(np.uint64, copy=True)
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def derive_key(master: int, stream: int, index: int = 0) -> int:
    """Child key for (stream, index) under a master seed.

    Two mixing rounds: one absorbing the stream salt, one the index. Used for
    per-realization environment keys and per-walk trajectory keys, so serial
    and sharded runs see identical randomness.
    """
    k = mix64_int((int(master) + GOLDEN_INT * (stream + 1)) & MASK64)
    return mix64_int((k + GOLDEN_INT * (index + 1)) & MASK64)


def hash_uniform(key, counter):
    """Uniform float64 in [0, 1) from (key, counter); vectorized over counter."""
    if np.ndim(counter) == 0:
        h = mix64_int((int(key) + mix64_int(int(counter))) & MASK64)
        return (h >> 11) * _INV53
    h = mix64(np.uint64(int(key) & MASK64) + mix64(counter))
    return (h >> _S11).astype(np.float64) * _INV53


def stream_next(state: int) -> tuple:
    """Advance a splitmix64 stream: state += GOLDEN, value = mix(state).

    Returns (new_state, uniform in [0, 1)). One call per consumed variate,
    mirroring the kernels' per-step draw.
    """
    state = (int(state) + GOLDEN_INT) & MASK64
    return state, (mix64_int(state) >> 11) * _INV53


# --- edge identifier packing -------------------------------------------------
#
# An edge (base, axis) of Z^d is packed into one uint64: 3 low bits for the
# axis, then d fields of coord_bits(d) bits each holding base[i] + offset.
# This caps supported dimensions at 6 and coordinates at +-2^(coord_bits-1),
# generous for every box and walk length this package targets.

MAX_DIM = 6


def coord_bits(d: int) -> int:
    return 60 // d


def coord_offset(d: int) -> int:
    return 1 << (coord_bits(d) - 1)


def pack_edge(base, axis: int, d: int) -> int:
    """Pack a single edge id (base lattice point, positive axis)."""
    bits, off = coord_bits(d), coord_offset(d)
    code = axis
    for i in range(d):
        c = int(base[i]) + off
        if not 0 <= c < (1 << bits):
            raise ValueError(f"coordinate {base[i]} out of packable range for d={d}")
        code |= c << (3 + i * bits)
    return code


def pack_edge_grid(bases, axis: int, d: int) -> np.ndarray:
    """Vectorized pack: `bases` is (..., d) integer array -> uint64 codes."""
    bits, off = coord_bits(d), coord_offset(d)
    b = np.asarray(bases, dtype=np.int64)
    lo, hi = -off, (1 << bits) - off
    if b.min() < lo or b.max() >= hi:
        raise ValueError(f"coordinates outside packable range for d={d}")
    code = np.full(b.shape[:-1], axis, dtype=np.uint64)
    for i in range(d):
        code |= (b[..., i] + off).astype(np.uint64) << np.uint64(3 + i * bits)
    return code
