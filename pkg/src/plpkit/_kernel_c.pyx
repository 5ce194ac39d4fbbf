# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampling kernel.

Twin of _kernel_py: the two must agree bit for bit, so any edit to the
arithmetic here has to be mirrored there in the same expression order.
"""

from array import array

from libc.math cimport cos, exp, log, pow, sqrt

BACKEND = "c"

cdef double _INV53 = 1.1102230246251565e-16
cdef double _TWO_PI = 6.283185307179586


cdef inline unsigned long long _mix(unsigned long long x) noexcept nogil:
    x ^= x >> 30
    x = x * <unsigned long long>0xBF58476D1CE4E5B9
    x ^= x >> 27
    x = x * <unsigned long long>0x94D049BB133111EB
    x ^= x >> 31
    return x


def mix64(unsigned long long x):
    return _mix(x)


cdef inline double _unit(unsigned long long seed, unsigned long long sample,
                         unsigned long long stream,
                         unsigned long long draw) noexcept nogil:
    cdef unsigned long long h = _mix(seed)
    h = _mix(h + sample)
    h = _mix(h + stream)
    h = _mix(h + draw)
    return (h >> 11) * _INV53


def unit_uniform(unsigned long long seed, unsigned long long sample,
                 unsigned long long stream, unsigned long long draw):
    return _unit(seed, sample, stream, draw)


def sample_worldkeys(long long n, unsigned long long seed,
                     unsigned long long[::1] streams, long long[::1] kinds,
                     long long[::1] offsets, long long[::1] counts,
                     double[::1] probs, unsigned long long[::1] multipliers):
    out = array("Q", bytes(8 * n))
    cdef unsigned long long[::1] outv = out
    cdef long long n_fam = streams.shape[0]
    cdef unsigned long long seed_h = _mix(seed)
    cdef long long i, f, j, k, off, outcome, kind
    cdef unsigned long long h1, h, key
    cdef double u, acc
    with nogil:
        for i in range(n):
            h1 = _mix(seed_h + <unsigned long long>i)
            key = 0
            for f in range(n_fam):
                # stream mix then draw 0: adding the zero draw index is a no-op
                h = _mix(_mix(h1 + streams[f]))
                u = (h >> 11) * _INV53
                kind = kinds[f]
                off = offsets[f]
                if kind == 0:
                    outcome = 1 if u < probs[off] else 0
                else:
                    k = counts[f]
                    acc = 0.0
                    outcome = k if kind == 1 else k - 1
                    for j in range(k):
                        acc += probs[off + j]
                        if u < acc:
                            outcome = j
                            break
                if outcome:
                    key = key + <unsigned long long>outcome * multipliers[f]
            outv[i] = key
    return out


cdef inline double _gauss(unsigned long long seed, unsigned long long sample,
                          unsigned long long stream,
                          unsigned long long draw) noexcept nogil:
    cdef unsigned long long h = _mix(seed)
    h = _mix(h + sample)
    h = _mix(h + stream)
    cdef double u1 = ((_mix(h + draw) >> 11) + 1) * _INV53
    cdef double u2 = (_mix(h + draw + 1) >> 11) * _INV53
    return sqrt(-2.0 * log(u1)) * cos(_TWO_PI * u2)


def draw_gaussian(double mu, double sigma, unsigned long long seed,
                  unsigned long long sample, unsigned long long stream):
    return mu + sigma * _gauss(seed, sample, stream, 0)


def draw_poisson(double rate, unsigned long long seed,
                 unsigned long long sample, unsigned long long stream):
    cdef double limit = exp(-rate)
    cdef long long k = 0
    cdef double p = 1.0
    cdef unsigned long long draw = 0
    while True:
        p *= _unit(seed, sample, stream, draw)
        draw += 1
        if p <= limit:
            return k
        k += 1


def draw_gamma(double shape, double scale, unsigned long long seed,
               unsigned long long sample, unsigned long long stream):
    cdef unsigned long long cur = 0
    cdef double boost = 1.0
    cdef double u, d, c, x, v, x2
    if shape < 1.0:
        u = _unit(seed, sample, stream, cur)
        cur += 1
        boost = pow(u, 1.0 / shape)
        shape = shape + 1.0
    d = shape - 0.3333333333333333
    c = 1.0 / sqrt(9.0 * d)
    while True:
        x = _gauss(seed, sample, stream, cur)
        cur += 2
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = _unit(seed, sample, stream, cur)
        cur += 1
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v * boost * scale
        if log(u) < 0.5 * x2 + d * (1.0 - v + log(v)):
            return d * v * boost * scale
