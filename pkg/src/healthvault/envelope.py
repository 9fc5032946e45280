"""Hybrid encryption: AES-256-GCM data envelopes, data keys wrapped under RSA-3072 or ECIES.

Every randomized function takes an optional ``rng_seed``. ``None`` draws from
``os.urandom``; ``bytes`` seeds a private deterministic generator; a
``random.Random`` instance is consumed in place so a caller can thread one
seeded stream through a sequence of calls. Seeded modes exist for
reproducible test fixtures only.
"""

from __future__ import annotations

import base64
import enum
import functools
import hashlib
import json
import os
import random
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import gmpy2
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import IntegrityError, VaultError

RngSeed = Union[None, bytes, random.Random]

ENVELOPE_VERSION = 1
NONCE_LEN = 12
TAG_LEN = 16
DATA_KEY_LEN = 32

RSA_BITS = 3072
RSA_EXPONENT = 65537
_HASH_LEN = 32
RSA_OAEP_CAPACITY = RSA_BITS // 8 - 2 * _HASH_LEN - 2  # 318

SECP256K1_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
_EC_PUB_LEN = 33
_ECIES_INFO = b"healthvault/ecies-secp256k1/aes-256-gcm"


class EnvelopeError(VaultError):
    pass


class AuthFailure(EnvelopeError, IntegrityError):
    """Wrong key, or ciphertext/tag/nonce altered."""


class UnsupportedVersion(AuthFailure):
    pass


class DecryptFailure(EnvelopeError, IntegrityError):
    pass


class PayloadTooLarge(EnvelopeError):
    pass


class MalformedPublicKey(EnvelopeError):
    pass


class SchemeMismatch(EnvelopeError):
    pass


class AsymScheme(enum.Enum):
    RSA3072 = "rsa3072"
    ECIES_SECP256K1 = "ecies-secp256k1"

    @classmethod
    def parse(cls, text: str) -> "AsymScheme":
        aliases = {"rsa": cls.RSA3072, "ecc": cls.ECIES_SECP256K1}
        if text in aliases:
            return aliases[text]
        return cls(text)


def _byte_source(rng_seed: RngSeed) -> Callable[[int], bytes]:
    if rng_seed is None:
        return os.urandom
    if isinstance(rng_seed, random.Random):
        return rng_seed.randbytes
    return random.Random(bytes(rng_seed)).randbytes


# ---------------------------------------------------------------------------
# Data keys and symmetric envelopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DataKey:
    key: bytes

    def __post_init__(self) -> None:
        if len(self.key) != DATA_KEY_LEN:
            raise ValueError(f"data key must be {DATA_KEY_LEN} bytes, got {len(self.key)}")

    def __repr__(self) -> str:
        return "DataKey(<redacted>)"


def gen_data_key(rng_seed: RngSeed = None) -> DataKey:
    return DataKey(_byte_source(rng_seed)(DATA_KEY_LEN))


@dataclass(frozen=True)
class EnvelopeCiphertext:
    """Wire form: version(1) | nonce(12) | u32 BE length | ciphertext | tag(16)."""

    version: int
    nonce: bytes
    ciphertext: bytes
    auth_tag: bytes

    def to_bytes(self) -> bytes:
        return (
            struct.pack(">B", self.version)
            + self.nonce
            + struct.pack(">I", len(self.ciphertext))
            + self.ciphertext
            + self.auth_tag
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EnvelopeCiphertext":
        head = 1 + NONCE_LEN + 4
        if len(raw) < head + TAG_LEN:
            raise AuthFailure("envelope truncated")
        (version,) = struct.unpack_from(">B", raw, 0)
        nonce = raw[1 : 1 + NONCE_LEN]
        (length,) = struct.unpack_from(">I", raw, 1 + NONCE_LEN)
        if len(raw) != head + length + TAG_LEN:
            raise AuthFailure("envelope length field does not match its size")
        return cls(version, nonce, raw[head : head + length], raw[head + length :])


def _aad(version: int) -> bytes:
    return struct.pack(">B", version)


def seal_bytes(plaintext: bytes, key: DataKey, rng_seed: RngSeed = None) -> EnvelopeCiphertext:
    nonce = _byte_source(rng_seed)(NONCE_LEN)
    out = AESGCM(key.key).encrypt(nonce, bytes(plaintext), _aad(ENVELOPE_VERSION))
    return EnvelopeCiphertext(ENVELOPE_VERSION, nonce, out[:-TAG_LEN], out[-TAG_LEN:])


def open_bytes(ct: EnvelopeCiphertext, key: DataKey) -> bytes:
    if ct.version != ENVELOPE_VERSION:
        raise UnsupportedVersion(f"envelope version {ct.version}")
    if len(ct.nonce) != NONCE_LEN or len(ct.auth_tag) != TAG_LEN:
        raise AuthFailure("malformed nonce or tag")
    try:
        return AESGCM(key.key).decrypt(ct.nonce, ct.ciphertext + ct.auth_tag, _aad(ct.version))
    except InvalidTag:
        raise AuthFailure("envelope authentication failed") from None


# ---------------------------------------------------------------------------
# Asymmetric keypairs and their raw encodings
# ---------------------------------------------------------------------------


def _pack_fields(fields: list[tuple[bytes, int]]) -> bytes:
    out = bytearray()
    for tag, value in fields:
        body = value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")
        out += tag + struct.pack(">I", len(body)) + body
    return bytes(out)


def _unpack_fields(raw: bytes) -> dict[str, int]:
    fields, i = {}, 0
    while i < len(raw):
        if i + 5 > len(raw):
            raise ValueError("truncated key field header")
        tag = raw[i : i + 1].decode("ascii")
        (length,) = struct.unpack_from(">I", raw, i + 1)
        i += 5
        if i + length > len(raw):
            raise ValueError("truncated key field")
        fields[tag] = int.from_bytes(raw[i : i + length], "big")
        i += length
    return fields


@dataclass(frozen=True)
class AsymKeypair:
    scheme: AsymScheme
    public_key: bytes
    private_key: bytes

    def __repr__(self) -> str:
        return f"AsymKeypair({self.scheme.value}, public={self.public_b64()[:16]}...)"

    def public_b64(self) -> str:
        return base64.b64encode(self.public_key).decode("ascii")

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "public": base64.b64encode(self.public_key).decode("ascii"),
            "private": base64.b64encode(self.private_key).decode("ascii"),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AsymKeypair":
        return cls(
            AsymScheme(obj["scheme"]),
            base64.b64decode(obj["public"], validate=True),
            base64.b64decode(obj["private"], validate=True),
        )


def _rsa_keypair_from_primes(p: int, q: int) -> AsymKeypair:
    n = p * q
    e = RSA_EXPONENT
    d = pow(e, -1, (p - 1) * (q - 1))
    return AsymKeypair(
        AsymScheme.RSA3072,
        _pack_fields([(b"n", n), (b"e", e)]),
        _pack_fields([(b"n", n), (b"e", e), (b"d", d), (b"p", p), (b"q", q)]),
    )


def _seeded_prime(randbytes: Callable[[int], bytes], bits: int) -> int:
    while True:
        cand = int.from_bytes(randbytes(bits // 8), "big") | (0b11 << (bits - 2)) | 1
        p = int(gmpy2.next_prime(cand))
        if p.bit_length() == bits and (p - 1) % RSA_EXPONENT:
            return p


def ec_public_bytes(scalar: int) -> bytes:
    return (
        ec.derive_private_key(scalar, ec.SECP256K1())
        .public_key()
        .public_bytes(serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint)
    )


def ec_scalar_from_bytes(raw: bytes) -> int:
    """Map 32 random bytes into [1, n) for secp256k1."""
    return int.from_bytes(raw, "big") % (SECP256K1_ORDER - 1) + 1


def gen_asym_keypair(scheme: AsymScheme, rng_seed: RngSeed = None) -> AsymKeypair:
    if isinstance(rng_seed, (bytes, bytearray)) and len(rng_seed) < 32:
        raise ValueError("rng_seed must carry at least 32 bytes")
    if scheme is AsymScheme.ECIES_SECP256K1:
        scalar = ec_scalar_from_bytes(_byte_source(rng_seed)(32))
        return AsymKeypair(scheme, ec_public_bytes(scalar), scalar.to_bytes(32, "big"))
    if rng_seed is None:
        nums = rsa.generate_private_key(RSA_EXPONENT, RSA_BITS).private_numbers()
        return _rsa_keypair_from_primes(nums.p, nums.q)
    randbytes = _byte_source(rng_seed)
    while True:
        p = _seeded_prime(randbytes, RSA_BITS // 2)
        q = _seeded_prime(randbytes, RSA_BITS // 2)
        if p != q and (p * q).bit_length() == RSA_BITS:
            return _rsa_keypair_from_primes(p, q)


def _rsa_public(raw: bytes) -> tuple[int, int]:
    try:
        f = _unpack_fields(raw)
        n, e = f["n"], f["e"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise MalformedPublicKey(f"bad RSA public key encoding: {exc}") from None
    if n.bit_length() != RSA_BITS or e < 3 or e % 2 == 0:
        raise MalformedPublicKey("RSA public key is not a 3072-bit modulus with odd exponent")
    return n, e


@functools.lru_cache(maxsize=32)
def _rsa_private(raw: bytes) -> rsa.RSAPrivateKey:
    # key validation inside OpenSSL costs ~0.1 s, so parsed keys are cached
    f = _unpack_fields(raw)
    n, e, d, p, q = f["n"], f["e"], f["d"], f["p"], f["q"]
    numbers = rsa.RSAPrivateNumbers(
        p=p,
        q=q,
        d=d,
        dmp1=rsa.rsa_crt_dmp1(d, p),
        dmq1=rsa.rsa_crt_dmq1(d, q),
        iqmp=rsa.rsa_crt_iqmp(p, q),
        public_numbers=rsa.RSAPublicNumbers(e, n),
    )
    return numbers.private_key()


def _ec_public(raw: bytes) -> ec.EllipticCurvePublicKey:
    if len(raw) != _EC_PUB_LEN:
        raise MalformedPublicKey(f"EC public key must be {_EC_PUB_LEN} bytes compressed")
    try:
        return ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256K1(), raw)
    except ValueError as exc:
        raise MalformedPublicKey(str(exc)) from None


def validate_public_key(raw: bytes, scheme: AsymScheme) -> None:
    if scheme is AsymScheme.RSA3072:
        _rsa_public(raw)
    else:
        _ec_public(raw)


# ---------------------------------------------------------------------------
# Key wrapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WrappedBlob:
    scheme: AsymScheme
    payload: bytes

    def to_json(self) -> dict:
        return {"scheme": self.scheme.value, "payload": base64.b64encode(self.payload).decode("ascii")}

    @classmethod
    def from_json(cls, obj: dict) -> "WrappedBlob":
        return cls(AsymScheme(obj["scheme"]), base64.b64decode(obj["payload"], validate=True))


def _mgf1(seed: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
        counter += 1
    return bytes(out[:length])


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def _oaep_encode(message: bytes, k: int, seed: bytes) -> bytes:
    # EME-OAEP, SHA-256 + MGF1-SHA-256, empty label
    l_hash = hashlib.sha256(b"").digest()
    ps = b"\x00" * (k - len(message) - 2 * _HASH_LEN - 2)
    db = l_hash + ps + b"\x01" + message
    masked_db = _xor(db, _mgf1(seed, k - _HASH_LEN - 1))
    masked_seed = _xor(seed, _mgf1(masked_db, _HASH_LEN))
    return b"\x00" + masked_seed + masked_db


def _rsa_wrap(payload: bytes, public_key: bytes, randbytes: Callable[[int], bytes]) -> bytes:
    n, e = _rsa_public(public_key)
    k = (n.bit_length() + 7) // 8
    if len(payload) > k - 2 * _HASH_LEN - 2:
        raise PayloadTooLarge(
            f"{len(payload)} bytes exceeds RSA-OAEP capacity of {k - 2 * _HASH_LEN - 2}"
        )
    em = _oaep_encode(payload, k, randbytes(_HASH_LEN))
    return pow(int.from_bytes(em, "big"), e, n).to_bytes(k, "big")


def _ecies_key(shared_x: bytes, eph_pub: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=_ECIES_INFO).derive(
        eph_pub + shared_x
    )


def _ecies_wrap(payload: bytes, public_key: bytes, randbytes: Callable[[int], bytes]) -> bytes:
    recipient = _ec_public(public_key)
    eph = ec.derive_private_key(ec_scalar_from_bytes(randbytes(32)), ec.SECP256K1())
    eph_pub = eph.public_key().public_bytes(
        serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint
    )
    key = _ecies_key(eph.exchange(ec.ECDH(), recipient), eph_pub)
    nonce = randbytes(NONCE_LEN)
    return eph_pub + nonce + AESGCM(key).encrypt(nonce, bytes(payload), eph_pub)


def wrap_key(
    payload: bytes, recipient_pub: bytes, scheme: AsymScheme, rng_seed: RngSeed = None
) -> WrappedBlob:
    randbytes = _byte_source(rng_seed)
    if scheme is AsymScheme.RSA3072:
        return WrappedBlob(scheme, _rsa_wrap(payload, recipient_pub, randbytes))
    return WrappedBlob(scheme, _ecies_wrap(payload, recipient_pub, randbytes))


def unwrap_key(blob: WrappedBlob, recipient: AsymKeypair) -> bytes:
    if blob.scheme is not recipient.scheme:
        raise SchemeMismatch(f"blob is {blob.scheme.value}, key is {recipient.scheme.value}")
    if blob.scheme is AsymScheme.RSA3072:
        try:
            priv = _rsa_private(recipient.private_key)
        except (ValueError, KeyError) as exc:
            raise DecryptFailure(f"unusable RSA private key: {exc}") from None
        try:
            return priv.decrypt(
                blob.payload,
                padding.OAEP(
                    mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None
                ),
            )
        except ValueError:
            raise DecryptFailure("RSA-OAEP decryption failed") from None

    payload = blob.payload
    if len(payload) < _EC_PUB_LEN + NONCE_LEN + TAG_LEN:
        raise DecryptFailure("ECIES payload truncated")
    eph_pub = payload[:_EC_PUB_LEN]
    nonce = payload[_EC_PUB_LEN : _EC_PUB_LEN + NONCE_LEN]
    try:
        eph = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256K1(), eph_pub)
        priv = ec.derive_private_key(int.from_bytes(recipient.private_key, "big"), ec.SECP256K1())
    except ValueError as exc:
        raise DecryptFailure(f"bad ECIES point or key: {exc}") from None
    key = _ecies_key(priv.exchange(ec.ECDH(), eph), eph_pub)
    try:
        return AESGCM(key).decrypt(nonce, payload[_EC_PUB_LEN + NONCE_LEN :], eph_pub)
    except InvalidTag:
        raise DecryptFailure("ECIES authentication failed") from None


def keypair_matches(kp: AsymKeypair, rng_seed: RngSeed = None) -> bool:
    """Probe that both halves belong together by a wrap/unwrap roundtrip."""
    probe = _byte_source(rng_seed)(DATA_KEY_LEN)
    try:
        return unwrap_key(wrap_key(probe, kp.public_key, kp.scheme, rng_seed), kp) == probe
    except EnvelopeError:
        return False


# ---------------------------------------------------------------------------
# Key files
# ---------------------------------------------------------------------------


def save_keypair(kp: AsymKeypair, path: Path) -> None:
    Path(path).write_text(json.dumps(kp.to_json(), indent=2) + "\n")


def load_keypair(path: Path) -> AsymKeypair:
    return AsymKeypair.from_json(json.loads(Path(path).read_text()))


def save_public_key(public_key: bytes, scheme: AsymScheme, path: Path) -> None:
    """One header line naming the scheme, then the key as base64."""
    Path(path).write_text(f"{scheme.value}\n{base64.b64encode(public_key).decode('ascii')}\n")


def load_public_key(path: Path) -> tuple[AsymScheme, bytes]:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        kp = json.loads(text)
        return AsymScheme(kp["scheme"]), base64.b64decode(kp["public"], validate=True)
    header, body = text.strip().split("\n", 1)
    try:
        raw = base64.b64decode("".join(body.split()), validate=True)
    except ValueError:
        raise MalformedPublicKey("public key body is not base64") from None
    return AsymScheme.parse(header.strip()), raw
