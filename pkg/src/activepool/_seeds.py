"""Deterministic derivation of nested RNG seeds.

Every stochastic component in the package (splits, bags, k-means inits,
random batches, per-trial runs) receives its own seed derived from a single
master seed through this module, so a whole benchmark is reproducible from
one integer and independent of execution order or thread count.

The mixer is splitmix64; the constants below are its published ones and are
fixed so that seeds can be re-derived outside this package if needed.
"""

SPLITMIX64_GAMMA = 0x9E3779B97F4A7C15
_MIX_1 = 0xBF58476D1CE4E5B9
_MIX_2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One splitmix64 output step on a 64-bit state."""
    z = (state + SPLITMIX64_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX_1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_2) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(base: int, *parts: int) -> int:
    """Mix ``base`` and any number of integer tags into a fresh 64-bit seed.

    The chain is ``s0 = splitmix64(base); s_{i+1} = splitmix64(s_i ^ part_i)``,
    so distinct tag tuples give statistically independent streams while the
    same tuple always reproduces the same seed.
    """
    state = splitmix64(base & _MASK64)
    for part in parts:
        state = splitmix64(state ^ (part & _MASK64))
    return state
