"""Seeded random streams.

All randomness in the package flows through ``numpy.random.Generator``
instances backed by the counter-based Philox bit generator, keyed by a
64-bit seed.  Independent sub-streams are derived with :func:`derive_seed`,
a SplitMix64-based hash of the master seed and an arbitrary tag sequence,
so that sweep cells can be executed in any order (or in parallel) and
still reproduce byte-identical output.

Gaussian variates are produced by the Marsaglia polar method driven by the
bit generator's raw uniform doubles.  Uniform doubles are part of the
BitGenerator stability contract, which keeps golden values portable across
numpy versions; ``Generator.standard_normal`` is not.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    """One SplitMix64 step; maps uint64 -> uint64."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *tags: object) -> int:
    """Derive an independent 64-bit seed from a master seed and tags.

    Tags may be ints or strings.  The mix is a SplitMix64 absorption of the
    master seed followed by each tag (strings are folded in as their UTF-8
    bytes, 8 bytes per step).  Documented so external tooling can reproduce
    per-cell seeds.
    """
    state = splitmix64(master & _MASK64)
    for tag in tags:
        if isinstance(tag, str):
            data = tag.encode("utf-8")
            for off in range(0, len(data), 8):
                chunk = int.from_bytes(data[off : off + 8], "little")
                state = splitmix64(state ^ chunk)
            state = splitmix64(state ^ len(data))
        else:
            state = splitmix64(state ^ (int(tag) & _MASK64))
    return state


def make_rng(seed: int) -> np.random.Generator:
    """Philox generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


def as_rng(seed_or_rng: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return make_rng(int(seed_or_rng))


def polar_normal(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normals via the Marsaglia polar method.

    Consumes only raw uniform doubles from ``rng`` (see module docstring).
    """
    out = np.empty(size, dtype=np.float64)
    filled = 0
    while filled < size:
        # Each accepted (u, v) pair yields two normals; acceptance ~ pi/4.
        need = size - filled
        batch = max(256, int(need * 0.7) + 16)
        u = 2.0 * rng.random(batch) - 1.0
        v = 2.0 * rng.random(batch) - 1.0
        r2 = u * u + v * v
        ok = (r2 > 0.0) & (r2 < 1.0)
        u, v, r2 = u[ok], v[ok], r2[ok]
        factor = np.sqrt(-2.0 * np.log(r2) / r2)
        pair = np.concatenate([u * factor, v * factor])
        take = min(pair.size, need)
        out[filled : filled + take] = pair[:take]
        filled += take
    return out
