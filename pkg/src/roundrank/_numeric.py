import math

# slack for powers like 1000 ** (2 / 3) that land a hair above an integer
_EPS = 1e-9


def ceil_real(x: float) -> int:
    return math.ceil(x - _EPS * max(1.0, abs(x)))


def floor_real(x: float) -> int:
    return math.floor(x + _EPS * max(1.0, abs(x)))


def odd_ceil(x: float) -> int:
    """Smallest odd integer >= ceil(x), and at least 1."""
    c = max(1, ceil_real(x))
    return c if c % 2 else c + 1


def int_root_ceil(n: int, degree: int) -> int:
    """Smallest integer c with c ** degree >= n."""
    c = max(1, round(n ** (1.0 / degree)))
    while c**degree < n:
        c += 1
    while c > 1 and (c - 1) ** degree >= n:
        c -= 1
    return c
