"""Pure-Python fallback for the compiled RNG kernels.

Implements exactly the same xoshiro256** stream and Box-Muller transform as
``_kernels.pyx``, operating on the same uint64[6] state layout. Outputs are
bit-identical to the compiled path (integer arithmetic is exact and the
transcendental calls hit the same libm).
"""

import math
import struct

_MASK = (1 << 64) - 1
_TWO_PI = 6.283185307179586
_INV_2_53 = 1.0 / 9007199254740992.0  # 2^-53


def _next(s):
    # xoshiro256** step on a 4-element list of ints; returns the draw.
    s1 = s[1]
    result = ((((s1 * 5) & _MASK) << 7 | ((s1 * 5) & _MASK) >> 57) & _MASK) * 9 & _MASK
    t = (s1 << 17) & _MASK
    s[2] ^= s[0]
    s[3] ^= s1
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = ((s[3] << 45) | (s[3] >> 19)) & _MASK
    return result


def fill_u64(state, out):
    s = [int(state[j]) for j in range(4)]
    for i in range(out.shape[0]):
        out[i] = _next(s)
    for j in range(4):
        state[j] = s[j]


def fill_uniform(state, out):
    s = [int(state[j]) for j in range(4)]
    for i in range(out.shape[0]):
        out[i] = float(_next(s) >> 11) * _INV_2_53
    for j in range(4):
        state[j] = s[j]


def fill_normal(state, out):
    n = out.shape[0]
    if n == 0:
        return
    s = [int(state[j]) for j in range(4)]
    i = 0
    if int(state[4]) != 0:
        out[0] = struct.unpack("<d", struct.pack("<Q", int(state[5])))[0]
        state[4] = 0
        i = 1
    while i + 1 < n:
        u1 = 1.0 - float(_next(s) >> 11) * _INV_2_53
        u2 = float(_next(s) >> 11) * _INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        th = _TWO_PI * u2
        out[i] = r * math.cos(th)
        out[i + 1] = r * math.sin(th)
        i += 2
    if i < n:
        u1 = 1.0 - float(_next(s) >> 11) * _INV_2_53
        u2 = float(_next(s) >> 11) * _INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        th = _TWO_PI * u2
        out[i] = r * math.cos(th)
        state[5] = struct.unpack("<Q", struct.pack("<d", r * math.sin(th)))[0]
        state[4] = 1
    for j in range(4):
        state[j] = s[j]
