"""Deterministic seed derivation so sub-experiments are independently reproducible."""

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 step; maps any 64-bit value to a well-mixed 64-bit value."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(root: int, *stream: int) -> int:
    """Derive a child seed from a root seed and an arbitrary index path."""
    s = splitmix64(root & _MASK)
    for v in stream:
        s = splitmix64(s ^ (int(v) & _MASK))
    return s
