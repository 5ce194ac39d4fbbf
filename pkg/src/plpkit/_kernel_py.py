"""Pure-Python sampling kernel.

Twin of the compiled kernel: every function here must return bit-identical
results to its compiled counterpart, because estimates have to be
reproducible regardless of which backend loaded. Keep the arithmetic
expression order in the two files in lockstep when editing.

The generator is counter-based: a draw is a pure function of
(seed, sample, stream, draw), so lazy and eager evaluation orders see the
same values and backtracking retries are automatically consistent.
"""

from __future__ import annotations

import math
from array import array

BACKEND = "python"

_MASK = (1 << 64) - 1
_INV53 = 1.1102230246251565e-16  # 2**-53


def mix64(x: int) -> int:
    x &= _MASK
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK
    x ^= x >> 31
    return x


def unit_uniform(seed: int, sample: int, stream: int, draw: int) -> float:
    h = mix64(seed)
    h = mix64((h + sample) & _MASK)
    h = mix64((h + stream) & _MASK)
    h = mix64((h + draw) & _MASK)
    return (h >> 11) * _INV53


def sample_worldkeys(n: int, seed: int, streams, kinds, offsets, counts,
                     probs, multipliers):
    """Radix-packed outcome vectors for n independent samples.

    Per family: kind 0 is a fact (probs[offset] = success probability,
    outcome 1 on success), kind 1 an exclusive choice with a null outcome
    (index = head count), kind 2 a choice whose heads exhaust the mass
    (cumulative rounding spills into the last head).
    """
    out = array("Q", bytes(8 * n))
    n_fam = len(streams)
    mask = _MASK
    inv = _INV53
    mul_a = 0xBF58476D1CE4E5B9
    mul_b = 0x94D049BB133111EB
    seed_h = mix64(seed)
    for i in range(n):
        h1 = (seed_h + i) & mask
        h1 ^= h1 >> 30
        h1 = (h1 * mul_a) & mask
        h1 ^= h1 >> 27
        h1 = (h1 * mul_b) & mask
        h1 ^= h1 >> 31
        key = 0
        for f in range(n_fam):
            h = (h1 + streams[f]) & mask
            h ^= h >> 30
            h = (h * mul_a) & mask
            h ^= h >> 27
            h = (h * mul_b) & mask
            h ^= h >> 31
            # draw index 0
            h ^= h >> 30
            h = (h * mul_a) & mask
            h ^= h >> 27
            h = (h * mul_b) & mask
            h ^= h >> 31
            u = (h >> 11) * inv
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
                key = (key + outcome * multipliers[f]) & mask
        out[i] = key
    return out


def _gauss(seed: int, sample: int, stream: int, draw: int) -> float:
    """Standard normal from two counter draws (Box-Muller, cosine leg).
    The log draw is shifted into (0, 1] so it never sees zero."""
    h = mix64(seed)
    h = mix64((h + sample) & _MASK)
    h = mix64((h + stream) & _MASK)
    u1 = ((mix64((h + draw) & _MASK) >> 11) + 1) * _INV53
    u2 = (mix64((h + draw + 1) & _MASK) >> 11) * _INV53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(6.283185307179586 * u2)


def draw_gaussian(mu: float, sigma: float, seed: int, sample: int,
                  stream: int) -> float:
    return mu + sigma * _gauss(seed, sample, stream, 0)


def draw_poisson(rate: float, seed: int, sample: int, stream: int) -> int:
    limit = math.exp(-rate)
    k = 0
    p = 1.0
    draw = 0
    while True:
        p *= unit_uniform(seed, sample, stream, draw)
        draw += 1
        if p <= limit:
            return k
        k += 1


def draw_gamma(shape: float, scale: float, seed: int, sample: int,
               stream: int) -> float:
    cur = 0
    boost = 1.0
    if shape < 1.0:
        u = unit_uniform(seed, sample, stream, cur)
        cur += 1
        boost = math.pow(u, 1.0 / shape)
        shape = shape + 1.0
    d = shape - 0.3333333333333333
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = _gauss(seed, sample, stream, cur)
        cur += 2
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = unit_uniform(seed, sample, stream, cur)
        cur += 1
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v * boost * scale
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v * boost * scale
