"""GF(256) arithmetic with the 0x11B reduction polynomial.

Addition is XOR.  Multiplication goes through a full 256x256 product table
built once at import; ``MUL[a, b]`` is the product and ``INV[a]`` the
multiplicative inverse (``INV[0]`` is a placeholder 0).
"""

import numpy as np

POLY = 0x11B
ORDER = 256


class FieldError(ArithmeticError):
    """Raised for field operations with no defined result (inverse of zero)."""


def clmul_reduce(a: int, b: int, poly: int = POLY) -> int:
    """Shift-and-add product of two field elements, reduced by ``poly``."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a & 0x100:
            a ^= poly
    return r


def _build_tables():
    # 0x03 generates the multiplicative group under 0x11B
    exp = np.zeros(512, dtype=np.int32)
    log = np.zeros(256, dtype=np.int32)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x = clmul_reduce(x, 0x03)
    exp[255:510] = exp[:255]
    la = log[:, None] + log[None, :]
    mul = exp[la].astype(np.uint8)
    mul[0, :] = 0
    mul[:, 0] = 0
    inv = np.zeros(256, dtype=np.uint8)
    inv[1:] = exp[255 - log[1:]]
    return exp[:255].astype(np.uint8), log, mul, inv


EXP, LOG, MUL, INV = _build_tables()
MUL.setflags(write=False)
INV.setflags(write=False)


def gf_add(a: int, b: int) -> int:
    return a ^ b


def gf_mul(a: int, b: int) -> int:
    """Product of two field elements."""
    return int(MUL[a, b])


def gf_inv(a: int) -> int:
    """Multiplicative inverse; zero has none."""
    if a == 0:
        raise FieldError("0 has no multiplicative inverse in GF(256)")
    if not 0 < a < ORDER:
        raise ValueError(f"{a!r} is not a GF(256) element")
    return int(INV[a])


def gf_div(a: int, b: int) -> int:
    return gf_mul(a, gf_inv(b))
