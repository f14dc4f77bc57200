"""Independent reference implementations used only to cross-check the package.

Nothing here imports from homemesh: the enumeration router, the bitwise CRC,
and the generator below are written from their definitions so the tests stay
a second, separate route to every checked value.
"""

import itertools

MASK64 = (1 << 64) - 1


def crc32_bitwise(data: bytes) -> int:
    """CRC-32 (IEEE 802.3, reflected), one bit at a time."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def splitmix64_stream(seed: int):
    state = seed & MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        yield z ^ (z >> 31)


def enum_best_route(cost_rows, src, dst, radius):
    """Purely enumerative optimum over permutations of intermediate nodes.

    Returns (dist, hops, path) minimizing lexicographic order, or None when no
    simple path respects the radius. Exponential: keep n <= 7 or so.
    """
    n = len(cost_rows)
    if src == dst:
        return (0.0, 0, (src,))
    others = [x for x in range(1, n + 1) if x not in (src, dst)]
    best = None
    for size in range(len(others) + 1):
        for middle in itertools.permutations(others, size):
            path = (src, *middle, dst)
            if all(cost_rows[a - 1][b - 1] <= radius for a, b in zip(path, path[1:])):
                dist = sum(cost_rows[a - 1][b - 1] for a, b in zip(path, path[1:]))
                key = (dist, len(path) - 1, path)
                if best is None or key < best:
                    best = key
    return best


def cid_checksum_brute(digits15: str):
    """All digits that complete the mod-15 rule ('0' worth 10)."""
    value = lambda ch: 10 if ch == "0" else int(ch)
    total = sum(value(ch) for ch in digits15)
    return [c for c in "0123456789" if (total + value(c)) % 15 == 0]
