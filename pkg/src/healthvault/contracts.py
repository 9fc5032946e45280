"""Storage and permission contracts as replayable state machines.

Contract state is never written directly. The ledger folds every confirmed
call through :func:`apply_call`; builders such as :func:`storage_upload`
validate arguments up front and return the call to be signed.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, NamedTuple

from .envelope import WrappedBlob
from .errors import DeniedError, NotFoundError, VaultError

Address = str

MAX_DESCRIPTION_BYTES = 1024


class Contract(str, enum.Enum):
    STORAGE = "CriptDStorage"
    PERMISSION = "CriptDPermission"
    TRANSFER = "Transfer"


class ContractError(VaultError):
    pass


class EmptyCiphertext(ContractError):
    pass


class DescriptionTooLong(ContractError):
    pass


class NotOwner(ContractError, DeniedError):
    pass


class BadWindow(ContractError):
    pass


class SelfGrant(ContractError):
    pass


class UnknownFile(ContractError, NotFoundError):
    pass


class UnknownGrant(ContractError, NotFoundError):
    pass


class BadCall(ContractError):
    """Payload does not decode to the method's argument schema."""


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class FileRecord:
    file_id: int
    owner: Address
    enc_cid: WrappedBlob
    enc_data_key: WrappedBlob
    description: str
    file_type: str
    size_bytes: int
    uploaded_at: int


@dataclass(frozen=True)
class PermissionGrant:
    grant_id: int
    granter: Address
    grantee: Address
    file_id: int
    enc_cid_for_grantee: WrappedBlob
    enc_data_key_for_grantee: WrappedBlob
    description: str
    file_type: str
    valid_from: int
    valid_until: int


@dataclass
class ContractState:
    files: list[FileRecord] = field(default_factory=list)
    grants: list[PermissionGrant] = field(default_factory=list)

    def copy(self) -> "ContractState":
        # records are frozen, so sharing them is safe
        return ContractState(list(self.files), list(self.grants))

    def file(self, file_id: int) -> FileRecord:
        if not 0 <= file_id < len(self.files):
            raise UnknownFile(f"no file {file_id}")
        return self.files[file_id]

    def grant(self, grant_id: int) -> PermissionGrant:
        if not 0 <= grant_id < len(self.grants):
            raise UnknownGrant(f"no grant {grant_id}")
        return self.grants[grant_id]


class Call(NamedTuple):
    contract: Contract
    method: str
    payload: bytes


# ---------------------------------------------------------------------------
# Argument checks shared by builders and replay
# ---------------------------------------------------------------------------


def _check_text(description: str) -> None:
    if len(description.encode("utf-8")) > MAX_DESCRIPTION_BYTES:
        raise DescriptionTooLong(f"description exceeds {MAX_DESCRIPTION_BYTES} bytes")


def _check_blobs(*blobs: WrappedBlob) -> None:
    if any(not b.payload for b in blobs):
        raise EmptyCiphertext("wrapped CID and data key must be non-empty")


def _check_grant(
    state: ContractState, sender: Address, file_id: int, grantee: Address, valid_from: int, valid_until: int
) -> None:
    record = state.file(file_id)
    if record.owner != sender:
        raise NotOwner(f"{sender} does not own file {file_id}")
    if grantee == sender:
        raise SelfGrant("cannot grant a file to its owner")
    if not valid_from < valid_until:
        raise BadWindow(f"window [{valid_from}, {valid_until}) is empty")


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def storage_upload(
    enc_cid: WrappedBlob,
    enc_data_key: WrappedBlob,
    description: str,
    file_type: str,
    size_bytes: int,
) -> Call:
    _check_blobs(enc_cid, enc_data_key)
    _check_text(description)
    args = {
        "encCid": enc_cid.to_json(),
        "encDataKey": enc_data_key.to_json(),
        "description": description,
        "fileType": file_type,
        "sizeBytes": int(size_bytes),
    }
    return Call(Contract.STORAGE, "uploadFile", canonical_json(args))


def permission_grant(
    state: ContractState,
    sender: Address,
    file_id: int,
    grantee: Address,
    enc_cid_for_grantee: WrappedBlob,
    enc_data_key_for_grantee: WrappedBlob,
    description: str,
    file_type: str,
    valid_from: int,
    valid_until: int,
) -> Call:
    _check_grant(state, sender, file_id, grantee, valid_from, valid_until)
    _check_blobs(enc_cid_for_grantee, enc_data_key_for_grantee)
    _check_text(description)
    args = {
        "fileId": int(file_id),
        "grantee": grantee,
        "encCidForGrantee": enc_cid_for_grantee.to_json(),
        "encDataKeyForGrantee": enc_data_key_for_grantee.to_json(),
        "description": description,
        "fileType": file_type,
        "validFrom": int(valid_from),
        "validUntil": int(valid_until),
    }
    return Call(Contract.PERMISSION, "grantPermission", canonical_json(args))


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


def _decode(payload: bytes, keys: set[str]) -> dict:
    try:
        args = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadCall(f"payload is not JSON: {exc}") from None
    if not isinstance(args, dict) or set(args) != keys:
        raise BadCall(f"expected arguments {sorted(keys)}")
    return args


def _blob(obj: Any) -> WrappedBlob:
    try:
        return WrappedBlob.from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise BadCall(f"bad wrapped blob: {exc}") from None


def _uint(value: Any) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise BadCall(f"expected unsigned integer, got {value!r}")
    return value


def _str(value: Any) -> str:
    if not isinstance(value, str):
        raise BadCall(f"expected string, got {value!r}")
    return value


def apply_call(
    state: ContractState, sender: Address, contract: Contract, method: str, payload: bytes, timestamp: int
) -> None:
    """Execute one confirmed call against ``state`` in place."""
    if contract is Contract.STORAGE and method == "uploadFile":
        a = _decode(payload, {"encCid", "encDataKey", "description", "fileType", "sizeBytes"})
        enc_cid, enc_key = _blob(a["encCid"]), _blob(a["encDataKey"])
        _check_blobs(enc_cid, enc_key)
        description = _str(a["description"])
        _check_text(description)
        state.files.append(
            FileRecord(
                file_id=len(state.files),
                owner=sender,
                enc_cid=enc_cid,
                enc_data_key=enc_key,
                description=description,
                file_type=_str(a["fileType"]),
                size_bytes=_uint(a["sizeBytes"]),
                uploaded_at=timestamp,
            )
        )
    elif contract is Contract.PERMISSION and method == "grantPermission":
        a = _decode(
            payload,
            {
                "fileId", "grantee", "encCidForGrantee", "encDataKeyForGrantee",
                "description", "fileType", "validFrom", "validUntil",
            },
        )
        file_id, grantee = _uint(a["fileId"]), _str(a["grantee"])
        valid_from, valid_until = _uint(a["validFrom"]), _uint(a["validUntil"])
        _check_grant(state, sender, file_id, grantee, valid_from, valid_until)
        enc_cid, enc_key = _blob(a["encCidForGrantee"]), _blob(a["encDataKeyForGrantee"])
        _check_blobs(enc_cid, enc_key)
        description = _str(a["description"])
        _check_text(description)
        state.grants.append(
            PermissionGrant(
                grant_id=len(state.grants),
                granter=sender,
                grantee=grantee,
                file_id=file_id,
                enc_cid_for_grantee=enc_cid,
                enc_data_key_for_grantee=enc_key,
                description=description,
                file_type=_str(a["fileType"]),
                valid_from=valid_from,
                valid_until=valid_until,
            )
        )
    else:
        raise BadCall(f"{contract.value} has no method {method!r}")


# ---------------------------------------------------------------------------
# Views
# ---------------------------------------------------------------------------


def storage_list(owner: Address, state: ContractState) -> list[FileRecord]:
    return [r for r in state.files if r.owner == owner]


def permission_list_for(grantee: Address, state: ContractState) -> list[PermissionGrant]:
    return [g for g in state.grants if g.grantee == grantee]


def check_access(grant: PermissionGrant, at_time: int) -> bool:
    return grant.valid_from <= at_time < grant.valid_until


# ---------------------------------------------------------------------------
# ABI
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AbiFunction:
    name: str
    inputs: tuple[tuple[str, str], ...]
    outputs: tuple[str, ...]
    mutability: str = "nonpayable"


@dataclass(frozen=True)
class AbiDescriptor:
    contract_name: str
    functions: tuple[AbiFunction, ...]

    def to_json(self) -> list[dict]:
        return [
            {
                "type": "function",
                "name": f.name,
                "inputs": [{"name": n, "type": t} for n, t in f.inputs],
                "outputs": [{"type": t} for t in f.outputs],
                "stateMutability": f.mutability,
            }
            for f in self.functions
        ]

    def dumps(self) -> str:
        return json.dumps({"contractName": self.contract_name, "abi": self.to_json()}, indent=2, sort_keys=True)


_FILE_TUPLE = "tuple(uint256,address,bytes,bytes,string,string,uint256,uint256)[]"
_GRANT_TUPLE = "tuple(uint256,address,address,uint256,bytes,bytes,string,string,uint256,uint256)[]"

_ABIS = {
    Contract.STORAGE: AbiDescriptor(
        Contract.STORAGE.value,
        (
            AbiFunction(
                "uploadFile",
                (
                    ("encCid", "bytes"),
                    ("encDataKey", "bytes"),
                    ("description", "string"),
                    ("fileType", "string"),
                    ("sizeBytes", "uint256"),
                ),
                ("uint256",),
            ),
            AbiFunction("listFiles", (("owner", "address"),), (_FILE_TUPLE,), "view"),
        ),
    ),
    Contract.PERMISSION: AbiDescriptor(
        Contract.PERMISSION.value,
        (
            AbiFunction(
                "grantPermission",
                (
                    ("fileId", "uint256"),
                    ("grantee", "address"),
                    ("encCidForGrantee", "bytes"),
                    ("encDataKeyForGrantee", "bytes"),
                    ("description", "string"),
                    ("fileType", "string"),
                    ("validFrom", "uint256"),
                    ("validUntil", "uint256"),
                ),
                ("uint256",),
            ),
            AbiFunction("listPermissionsFor", (("grantee", "address"),), (_GRANT_TUPLE,), "view"),
            AbiFunction(
                "checkAccess", (("grantId", "uint256"), ("atTime", "uint256")), ("bool",), "view"
            ),
        ),
    ),
}


def export_abi(contract: Contract) -> AbiDescriptor:
    if contract not in _ABIS:
        raise ValueError(f"{contract.value} has no ABI")
    return _ABIS[contract]
