"""Small-number RSA and elliptic-curve arithmetic for worked examples.

Nothing here is meant to protect data: the integers are tiny, the arithmetic
is not constant time, and messages on the curve are raw points. Production
wrapping lives in :mod:`healthvault.envelope`.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd, isqrt
from typing import NamedTuple, Union

from .errors import VaultError


class ToyCryptoError(VaultError, ValueError):
    pass


class NotPrime(ToyCryptoError):
    pass


class ExponentNotCoprime(ToyCryptoError):
    pass


class MessageOutOfRange(ToyCryptoError):
    pass


class PointNotOnCurve(ToyCryptoError):
    pass


class ScalarOutOfRange(ToyCryptoError):
    pass


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % f for f in range(3, isqrt(n) + 1, 2))


def egcd(a: int, b: int) -> tuple[int, int, int]:
    """Return ``(g, x, y)`` with ``a*x + b*y == g == gcd(a, b)``."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def modinv(a: int, m: int) -> int:
    g, x, _ = egcd(a % m, m)
    if g != 1:
        raise ValueError(f"{a} has no inverse modulo {m}")
    return x % m


# ---------------------------------------------------------------------------
# RSA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToyRsaKeypair:
    p: int
    q: int
    n: int
    phi: int
    e: int
    d: int


def rsa_toy_keygen(p: int, q: int, e: int) -> ToyRsaKeypair:
    for v in (p, q):
        if not is_prime(v):
            raise NotPrime(f"{v} is not prime")
    if p == q:
        raise NotPrime("p and q must be distinct primes")
    n = p * q
    phi = (p - 1) * (q - 1)
    if not 1 < e < phi or gcd(e, phi) != 1:
        raise ExponentNotCoprime(f"e={e} is not a unit in (1, {phi}) coprime to {phi}")
    return ToyRsaKeypair(p=p, q=q, n=n, phi=phi, e=e, d=modinv(e, phi))


def rsa_toy_encrypt(m: int, n: int, e: int) -> int:
    if not 0 <= m < n:
        raise MessageOutOfRange(f"message {m} outside [0, {n})")
    return pow(m, e, n)


def rsa_toy_decrypt(c: int, n: int, d: int) -> int:
    if not 0 <= c < n:
        raise MessageOutOfRange(f"ciphertext {c} outside [0, {n})")
    return pow(c, d, n)


# ---------------------------------------------------------------------------
# Elliptic curves over a prime field
# ---------------------------------------------------------------------------


class Point(NamedTuple):
    x: int
    y: int


class _Infinity:
    """The group identity. A distinct object so (0, 0) stays an ordinary point."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INFINITY"

    def __reduce__(self):
        return (_Infinity, ())


INFINITY = _Infinity()

AnyPoint = Union[Point, _Infinity]


@dataclass(frozen=True)
class ToyCurve:
    """``y^2 = x^3 + a*x + b`` over F_p with generator ``G`` of order ``n``."""

    a: int
    b: int
    p: int
    G: Point
    n: int

    def __post_init__(self) -> None:
        if (4 * self.a**3 + 27 * self.b**2) % self.p == 0:
            raise ValueError("singular curve: 4a^3 + 27b^2 = 0 mod p")
        if not self.contains(self.G):
            raise PointNotOnCurve(f"generator {self.G} is not on the curve")

    def contains(self, P: AnyPoint) -> bool:
        if P is INFINITY:
            return True
        x, y = P
        if not (0 <= x < self.p and 0 <= y < self.p):
            return False
        return (y * y - (x**3 + self.a * x + self.b)) % self.p == 0

    def require(self, *points: AnyPoint) -> None:
        for P in points:
            if not self.contains(P):
                raise PointNotOnCurve(f"{P} is not on the curve")


DEFAULT_CURVE = ToyCurve(a=2, b=2, p=17, G=Point(5, 1), n=19)


def ec_negate(P: AnyPoint, curve: ToyCurve) -> AnyPoint:
    if P is INFINITY:
        return INFINITY
    return Point(P.x, (-P.y) % curve.p)


def _add(P: AnyPoint, Q: AnyPoint, curve: ToyCurve) -> AnyPoint:
    if P is INFINITY:
        return Q
    if Q is INFINITY:
        return P
    p = curve.p
    if P.x == Q.x and (P.y + Q.y) % p == 0:
        # vertical chord, or tangent at a point with y = 0
        return INFINITY
    if P == Q:
        slope = (3 * P.x * P.x + curve.a) * modinv(2 * P.y, p) % p
    else:
        slope = (Q.y - P.y) * modinv(Q.x - P.x, p) % p
    x3 = (slope * slope - P.x - Q.x) % p
    y3 = (slope * (P.x - x3) - P.y) % p
    return Point(x3, y3)


def ec_point_add(P: AnyPoint, Q: AnyPoint, curve: ToyCurve = DEFAULT_CURVE) -> AnyPoint:
    curve.require(P, Q)
    return _add(P, Q, curve)


def _mul(k: int, P: AnyPoint, curve: ToyCurve) -> AnyPoint:
    result: AnyPoint = INFINITY
    addend = P
    while k:
        if k & 1:
            result = _add(result, addend, curve)
        addend = _add(addend, addend, curve)
        k >>= 1
    return result


def ec_scalar_mul(k: int, P: AnyPoint, curve: ToyCurve = DEFAULT_CURVE) -> AnyPoint:
    if k < 0:
        raise ScalarOutOfRange("scalar must be non-negative")
    curve.require(P)
    return _mul(k, P, curve)


@dataclass(frozen=True)
class ToyEcKeypair:
    d: int
    P: AnyPoint


def ec_toy_keygen(d: int, curve: ToyCurve = DEFAULT_CURVE) -> ToyEcKeypair:
    if not 1 <= d < curve.n:
        raise ScalarOutOfRange(f"private scalar must lie in [1, {curve.n})")
    return ToyEcKeypair(d=d, P=_mul(d, curve.G, curve))


def ecdh_shared(d_self: int, P_other: AnyPoint, curve: ToyCurve = DEFAULT_CURVE) -> AnyPoint:
    if not 1 <= d_self < curve.n:
        raise ScalarOutOfRange(f"private scalar must lie in [1, {curve.n})")
    curve.require(P_other)
    return _mul(d_self, P_other, curve)


@dataclass(frozen=True)
class EcCiphertext:
    c1: AnyPoint
    c2: AnyPoint


def ecelgamal_encrypt(
    Pm: AnyPoint, PB: AnyPoint, k: int, curve: ToyCurve = DEFAULT_CURVE
) -> EcCiphertext:
    curve.require(Pm, PB)
    if not 1 <= k < curve.n:
        raise ScalarOutOfRange(f"ephemeral k must lie in [1, {curve.n})")
    return EcCiphertext(c1=_mul(k, curve.G, curve), c2=_add(Pm, _mul(k, PB, curve), curve))


def ecelgamal_decrypt(c: EcCiphertext, nB: int, curve: ToyCurve = DEFAULT_CURVE) -> AnyPoint:
    curve.require(c.c1, c.c2)
    return _add(c.c2, ec_negate(_mul(nB, c.c1, curve), curve), curve)
