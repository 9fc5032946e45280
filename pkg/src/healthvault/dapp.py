"""The seven user-facing flows: login, keys, upload, listing, retrieval, granting, shared access.

Plaintext CIDs and data keys exist only inside these calls. Nothing here
writes them to disk; the chain sees wrapped blobs and the store sees
ciphertext.
"""

from __future__ import annotations

import contextlib
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

from . import contracts
from .cas import ContentStore
from .contracts import Address, FileRecord, PermissionGrant
from .envelope import (
    AsymKeypair,
    AsymScheme,
    DataKey,
    EnvelopeCiphertext,
    EnvelopeError,
    RngSeed,
    gen_asym_keypair,
    gen_data_key,
    keypair_matches,
    open_bytes,
    seal_bytes,
    unwrap_key,
    validate_public_key,
    wrap_key,
)
from .errors import DeniedError, VaultError
from .ledger import Ledger
from .wallet import (
    ConfirmationPolicy,
    ConfirmationRequest,
    Decision,
    Wallet,
    auto_approve,
    new_transaction,
    request_confirmation,
    sign_tx,
)

logger = logging.getLogger(__name__)

Clock = Callable[[], int]


class DAppError(VaultError):
    pass


class KeyPairMismatch(DAppError):
    pass


class EmptyContent(DAppError, ValueError):
    pass


class Rejected(DAppError, DeniedError):
    """The user declined the transaction fee."""


class NotGrantee(DAppError, DeniedError):
    pass


class AccessExpired(DAppError, DeniedError):
    pass


class LoggedOut(DAppError):
    pass


NotOwner = contracts.NotOwner


def system_clock() -> int:
    return int(time.time())


@contextlib.contextmanager
def stage(name: str) -> Iterator[None]:
    """Label the first pipeline stage an error escapes from."""
    try:
        yield
    except VaultError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


@dataclass
class Session:
    wallet: Wallet
    scheme: AsymScheme
    enc_keypair: Optional[AsymKeypair]
    clock: Clock = system_clock
    fresh_keys: bool = False

    @property
    def address(self) -> Address:
        return self.wallet.address

    @property
    def keys(self) -> AsymKeypair:
        if self.enc_keypair is None:
            raise LoggedOut("session has been logged out")
        return self.enc_keypair

    def now(self) -> int:
        return int(self.clock())

    def logout(self) -> None:
        self.enc_keypair = None


def login(
    wallet: Wallet,
    scheme: AsymScheme,
    imported_keys: Optional[AsymKeypair] = None,
    clock: Clock = system_clock,
    rng_seed: RngSeed = None,
) -> Session:
    """Open a session. Without imported keys a fresh pair is generated for the user to save."""
    if imported_keys is None:
        return Session(wallet, scheme, gen_asym_keypair(scheme, rng_seed), clock, fresh_keys=True)
    if imported_keys.scheme is not scheme:
        raise KeyPairMismatch(f"imported keys are {imported_keys.scheme.value}, session is {scheme.value}")
    if not keypair_matches(imported_keys, rng_seed):
        raise KeyPairMismatch("public key does not match private key")
    return Session(wallet, scheme, imported_keys, clock)


@dataclass(frozen=True)
class StoredFileView:
    record: FileRecord
    cid: Optional[str]
    locked: bool = False


@dataclass(frozen=True)
class SharedFileView:
    grant: PermissionGrant
    live: bool


@dataclass
class DApp:
    """Binds a ledger, a content store and a fee-paying miner into the user flows."""

    ledger: Ledger
    store: ContentStore
    miner: Address
    gas_price: int = 1
    rng_seed: RngSeed = None
    _rng: Optional[random.Random] = field(init=False, default=None, repr=False)

    def __post_init__(self) -> None:
        if isinstance(self.rng_seed, (bytes, bytearray)):
            self._rng = random.Random(bytes(self.rng_seed))
        elif isinstance(self.rng_seed, random.Random):
            self._rng = self.rng_seed

    def _commit(self, s: Session, call: contracts.Call, policy: ConfirmationPolicy) -> None:
        tx = sign_tx(new_transaction(s.wallet, self.ledger.next_nonce(s.address), call, self.gas_price), s.wallet)
        with stage("confirm"):
            if request_confirmation(ConfirmationRequest.for_tx(tx), policy) is not Decision.APPROVED:
                raise Rejected(f"{call.contract.value}/{call.method} declined by the user")
        with stage("submit"):
            self.ledger.submit_tx(tx)
        with stage("mine"):
            self.ledger.mine_block(self.miner, self.ledger.next_timestamp(s.now()))

    # -- upload and owner access ------------------------------------------

    def store_file(
        self,
        s: Session,
        content: bytes,
        description: str,
        file_type: str,
        policy: ConfirmationPolicy = auto_approve,
    ) -> int:
        if not content:
            raise EmptyContent("nothing to store")
        keys = s.keys
        with stage("encrypt"):
            data_key = gen_data_key(self._rng)
            sealed = seal_bytes(content, data_key, self._rng)
        with stage("cas.put"):
            cid = self.store.put(sealed.to_bytes())
        with stage("wrap"):
            enc_cid = wrap_key(cid.encode("ascii"), keys.public_key, s.scheme, self._rng)
            enc_key = wrap_key(data_key.key, keys.public_key, s.scheme, self._rng)
        with stage("storage.uploadFile"):
            call = contracts.storage_upload(enc_cid, enc_key, description, file_type, len(content))
        self._commit(s, call, policy)
        # wrapped blobs carry a random nonce, so this match is unique
        for record in reversed(self.ledger.contracts.files):
            if record.enc_cid == enc_cid and record.owner == s.address:
                return record.file_id
        raise DAppError("upload mined but record not found")

    def list_my_files(self, s: Session) -> list[StoredFileView]:
        views = []
        for record in contracts.storage_list(s.address, self.ledger.contracts):
            try:
                cid = unwrap_key(record.enc_cid, s.keys).decode("ascii")
                views.append(StoredFileView(record, cid))
            except (EnvelopeError, UnicodeDecodeError):
                views.append(StoredFileView(record, None, locked=True))
        return views

    def _open(self, s: Session, enc_cid, enc_key) -> bytes:
        keys = s.keys
        with stage("unwrap"):
            cid = unwrap_key(enc_cid, keys).decode("ascii")
            data_key = DataKey(unwrap_key(enc_key, keys))
        with stage("cas.get"):
            raw = self.store.get(cid)
        with stage("decrypt"):
            return open_bytes(EnvelopeCiphertext.from_bytes(raw), data_key)

    def fetch_file(self, s: Session, file_id: int) -> bytes:
        with stage("lookup"):
            record = self.ledger.contracts.file(file_id)
            if record.owner != s.address:
                raise NotOwner(f"file {file_id} is not owned by {s.address}")
        return self._open(s, record.enc_cid, record.enc_data_key)

    # -- sharing ------------------------------------------------------------

    def grant_access(
        self,
        s: Session,
        file_id: int,
        grantee_addr: Address,
        grantee_pub: bytes,
        valid_from: int,
        valid_until: int,
        description: str,
        policy: ConfirmationPolicy = auto_approve,
    ) -> int:
        state = self.ledger.pending_contracts
        with stage("lookup"):
            record = state.file(file_id)
            if record.owner != s.address:
                raise NotOwner(f"file {file_id} is not owned by {s.address}")
            if not valid_from < valid_until:
                raise contracts.BadWindow(f"window [{valid_from}, {valid_until}) is empty")
            validate_public_key(grantee_pub, s.scheme)
        keys = s.keys
        with stage("rewrap"):
            cid = unwrap_key(record.enc_cid, keys)
            data_key = unwrap_key(record.enc_data_key, keys)
            enc_cid = wrap_key(cid, grantee_pub, s.scheme, self._rng)
            enc_key = wrap_key(data_key, grantee_pub, s.scheme, self._rng)
        with stage("permission.grantPermission"):
            call = contracts.permission_grant(
                state, s.address, file_id, grantee_addr, enc_cid, enc_key,
                description, record.file_type, valid_from, valid_until,
            )
        self._commit(s, call, policy)
        for grant in reversed(self.ledger.contracts.grants):
            if grant.enc_cid_for_grantee == enc_cid:
                return grant.grant_id
        raise DAppError("grant mined but not found")

    def list_shared(self, s: Session) -> list[SharedFileView]:
        now = s.now()
        return [
            SharedFileView(g, contracts.check_access(g, now))
            for g in contracts.permission_list_for(s.address, self.ledger.contracts)
        ]

    def fetch_shared(self, s: Session, grant_id: int) -> bytes:
        with stage("lookup"):
            grant = self.ledger.contracts.grant(grant_id)
            if grant.grantee != s.address:
                raise NotGrantee(f"grant {grant_id} does not name {s.address}")
        now = s.now()
        if not contracts.check_access(grant, now):
            # refuse before any key material is touched
            raise AccessExpired(
                f"grant {grant_id} is valid in [{grant.valid_from}, {grant.valid_until}), now is {now}"
            )
        return self._open(s, grant.enc_cid_for_grantee, grant.enc_data_key_for_grantee)
