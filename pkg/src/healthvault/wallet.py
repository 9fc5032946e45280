"""Signing accounts and the human confirm/reject step in front of every transaction."""

from __future__ import annotations

import enum
import hashlib
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Protocol, TextIO

from cryptography.hazmat.primitives.asymmetric import ec

from .contracts import Call
from .envelope import ec_scalar_from_bytes, ec_public_bytes
from .errors import VaultError
from .ledger import ECDSA_PREHASHED, Address, Transaction, derive_address, estimate_fee

MIN_SEED_LEN = 16
WALLET_WARNING = "plaintext signing key: keep this file private"


class WalletError(VaultError):
    pass


class SeedTooShort(WalletError, ValueError):
    pass


class SenderMismatch(WalletError):
    pass


@dataclass(frozen=True)
class Wallet:
    signing_private: bytes
    signing_public: bytes
    address: Address
    label: str = ""

    def __repr__(self) -> str:
        return f"Wallet({self.label!r}, {self.address})"

    def to_json(self) -> dict:
        return {
            "warning": WALLET_WARNING,
            "label": self.label,
            "private": self.signing_private.hex(),
            "public": self.signing_public.hex(),
            "address": self.address,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Wallet":
        w = wallet_from_scalar(int(obj["private"], 16), obj.get("label", ""))
        if w.address != obj["address"] or w.signing_public.hex() != obj["public"]:
            raise WalletError("wallet file is inconsistent: address does not derive from its key")
        return w


def wallet_from_scalar(scalar: int, label: str = "") -> Wallet:
    public = ec_public_bytes(scalar)
    return Wallet(scalar.to_bytes(32, "big"), public, derive_address(public), label)


def create_wallet(seed: bytes, label: str = "") -> Wallet:
    if len(seed) < MIN_SEED_LEN:
        raise SeedTooShort(f"seed must be at least {MIN_SEED_LEN} bytes")
    digest = hashlib.sha256(b"healthvault/wallet/v1" + bytes(seed)).digest()
    return wallet_from_scalar(ec_scalar_from_bytes(digest), label)


def save_wallet(w: Wallet, path: Path) -> None:
    Path(path).write_text(json.dumps(w.to_json(), indent=2) + "\n")


def load_wallet(path: Path) -> Wallet:
    return Wallet.from_json(json.loads(Path(path).read_text()))


def new_transaction(w: Wallet, nonce: int, call: Call, gas_price: int) -> Transaction:
    return Transaction(
        nonce=nonce,
        sender=w.address,
        contract=call.contract,
        method=call.method,
        payload=call.payload,
        gas_price=gas_price,
        public_key=w.signing_public,
    )


def sign_tx(tx: Transaction, w: Wallet) -> Transaction:
    """Return ``tx`` with the wallet's public key, ``tx_hash`` and an RFC 6979 signature."""
    if tx.sender != w.address:
        raise SenderMismatch(f"transaction sender {tx.sender} is not {w.address}")
    tx = replace(tx, public_key=w.signing_public, signature=b"", tx_hash=b"")
    tx_hash = tx.compute_hash()
    key = ec.derive_private_key(int.from_bytes(w.signing_private, "big"), ec.SECP256K1())
    return replace(tx, tx_hash=tx_hash, signature=key.sign(tx_hash, ECDSA_PREHASHED))


# ---------------------------------------------------------------------------
# Confirmation
# ---------------------------------------------------------------------------


class Decision(enum.Enum):
    APPROVED = "approved"
    REJECTED = "rejected"


@dataclass(frozen=True)
class ConfirmationRequest:
    contract: str
    method: str
    payload_size: int
    fee: int
    sender: Address

    @classmethod
    def for_tx(cls, tx: Transaction) -> "ConfirmationRequest":
        return cls(tx.contract.value, tx.method, len(tx.payload), estimate_fee(tx), tx.sender)

    def prompt(self) -> str:
        return (
            f"{self.contract}/{self.method}, {self.payload_size} bytes, "
            f"fee {self.fee} from {self.sender} — approve? [y/N]"
        )


class ConfirmationPolicy(Protocol):
    def __call__(self, req: ConfirmationRequest) -> Decision: ...


def auto_approve(req: ConfirmationRequest) -> Decision:
    return Decision.APPROVED


def auto_reject(req: ConfirmationRequest) -> Decision:
    return Decision.REJECTED


@dataclass(frozen=True)
class SpendingCap:
    limit: int

    def __call__(self, req: ConfirmationRequest) -> Decision:
        return Decision.APPROVED if req.fee <= self.limit else Decision.REJECTED


class InteractivePrompt:
    """Show the fee and sender, then read y/n. Anything but yes rejects."""

    def __init__(self, read: Callable[[], str] = input, out: Optional[TextIO] = None):
        self.read = read
        self.out = out

    def __call__(self, req: ConfirmationRequest) -> Decision:
        out = self.out or sys.stderr
        out.write(req.prompt() + " ")
        out.flush()
        try:
            answer = self.read()
        except EOFError:
            answer = ""
        return Decision.APPROVED if answer.strip().lower() in {"y", "yes"} else Decision.REJECTED


def request_confirmation(req: ConfirmationRequest, policy: ConfirmationPolicy) -> Decision:
    return policy(req)
