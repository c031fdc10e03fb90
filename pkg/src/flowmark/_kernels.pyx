# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RNG stream kernels (xoshiro256** + Box-Muller).

State layout, shared with the pure-Python fallback (uint64[6]):
  [0:4]  xoshiro256** state words
  [4]    1 if a Box-Muller deviate is cached, else 0
  [5]    IEEE-754 bit pattern of the cached deviate
"""

from libc.math cimport cos, log, sin, sqrt

ctypedef unsigned long long u64

cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0  # 2^-53


cdef inline u64 _rotl(u64 x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline u64 _next(u64 *s) nogil:
    # xoshiro256** (Blackman & Vigna), scrambler rotl(s1*5, 7)*9.
    cdef u64 result = _rotl(s[1] * 5ULL, 7) * 9ULL
    cdef u64 t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


def fill_u64(u64[::1] state, u64[::1] out):
    """Fill ``out`` with raw 64-bit draws, advancing ``state`` in place."""
    cdef Py_ssize_t i, n = out.shape[0]
    cdef u64 *s = &state[0]
    with nogil:
        for i in range(n):
            out[i] = _next(s)


def fill_uniform(u64[::1] state, double[::1] out):
    """Fill ``out`` with doubles in [0, 1): (draw >> 11) * 2^-53."""
    cdef Py_ssize_t i, n = out.shape[0]
    cdef u64 *s = &state[0]
    with nogil:
        for i in range(n):
            out[i] = <double> (_next(s) >> 11) * INV_2_53


def fill_normal(u64[::1] state, double[::1] out):
    """Fill ``out`` with standard normals via Box-Muller.

    Deviates come in pairs; an unconsumed second deviate is cached in the
    state so consecutive calls continue the same stream.
    """
    cdef Py_ssize_t i = 0, n = out.shape[0]
    cdef u64 *s = &state[0]
    cdef double *spare = <double *> &state[5]
    cdef double u1, u2, r, th
    if n == 0:
        return
    if state[4] != 0:
        out[0] = spare[0]
        state[4] = 0
        i = 1
    while i + 1 < n:
        u1 = 1.0 - <double> (_next(s) >> 11) * INV_2_53  # (0, 1]
        u2 = <double> (_next(s) >> 11) * INV_2_53
        r = sqrt(-2.0 * log(u1))
        th = TWO_PI * u2
        out[i] = r * cos(th)
        out[i + 1] = r * sin(th)
        i += 2
    if i < n:
        u1 = 1.0 - <double> (_next(s) >> 11) * INV_2_53
        u2 = <double> (_next(s) >> 11) * INV_2_53
        r = sqrt(-2.0 * log(u1))
        th = TWO_PI * u2
        out[i] = r * cos(th)
        spare[0] = r * sin(th)
        state[4] = 1
