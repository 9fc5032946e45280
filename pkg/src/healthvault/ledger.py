"""Single-node hash-linked ledger with gas fees, block rewards and optional proof of work.

Balances, nonces and contract state are never stored; they are recomputed by
replaying blocks from the genesis allocations in the config. The chain is
persisted as one canonical-JSON block per line.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec, utils

from . import contracts
from .contracts import Address, Contract, ContractError, ContractState, canonical_json
from .errors import DeniedError, IntegrityError, VaultError

logger = logging.getLogger(__name__)

BASE_GAS = 21000
GAS_PER_BYTE = 68
BLOCK_REWARD = 2
ZERO_HASH = bytes(32)
CHAIN_FILE = "chain.jsonl"
CONFIG_FILE = "ledger.json"


class LedgerError(VaultError):
    pass


class BadSignature(LedgerError, IntegrityError):
    pass


class BadNonce(LedgerError, DeniedError):
    pass


class InsufficientBalance(LedgerError, DeniedError):
    pass


class NothingToMine(LedgerError):
    pass


class InvalidChain(LedgerError, IntegrityError):
    pass


class BadTimestamp(LedgerError):
    pass


def derive_address(public_key: bytes) -> Address:
    """Last 20 bytes of SHA-256 over the compressed public key, as hex."""
    return hashlib.sha256(public_key).digest()[-20:].hex()


def leading_zero_bits(digest: bytes) -> int:
    n = int.from_bytes(digest, "big")
    return len(digest) * 8 - n.bit_length()


@dataclass(frozen=True)
class Transaction:
    nonce: int
    sender: Address
    contract: Contract
    method: str
    payload: bytes
    gas_price: int
    public_key: bytes = b""
    signature: bytes = b""
    tx_hash: bytes = b""

    def signing_body(self) -> dict:
        return {
            "nonce": self.nonce,
            "sender": self.sender,
            "public_key": self.public_key.hex(),
            "contract": self.contract.value,
            "method": self.method,
            "payload": self.payload.hex(),
            "gas_price": self.gas_price,
        }

    def compute_hash(self) -> bytes:
        return hashlib.sha256(canonical_json(self.signing_body())).digest()

    def to_json(self) -> dict:
        return {**self.signing_body(), "signature": self.signature.hex(), "tx_hash": self.tx_hash.hex()}

    @classmethod
    def from_json(cls, obj: dict) -> "Transaction":
        return cls(
            nonce=obj["nonce"],
            sender=obj["sender"],
            contract=Contract(obj["contract"]),
            method=obj["method"],
            payload=bytes.fromhex(obj["payload"]),
            gas_price=obj["gas_price"],
            public_key=bytes.fromhex(obj["public_key"]),
            signature=bytes.fromhex(obj["signature"]),
            tx_hash=bytes.fromhex(obj["tx_hash"]),
        )


def estimate_fee(tx: Transaction) -> int:
    return tx.gas_price * (BASE_GAS + GAS_PER_BYTE * len(tx.payload))


def transfer_call(to: Address, amount: int) -> contracts.Call:
    return contracts.Call(Contract.TRANSFER, "transfer", canonical_json({"to": to, "amount": amount}))


ECDSA_PREHASHED = ec.ECDSA(utils.Prehashed(hashes.SHA256()), deterministic_signing=True)


def verify_signature(tx: Transaction, public_key: Optional[bytes] = None) -> bool:
    pub = tx.public_key if public_key is None else public_key
    if tx.compute_hash() != tx.tx_hash:
        return False
    try:
        key = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256K1(), pub)
        key.verify(tx.signature, tx.tx_hash, ECDSA_PREHASHED)
    except (ValueError, InvalidSignature):
        return False
    return True


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    timestamp: int
    miner: Address
    difficulty: int
    pow_nonce: int
    txs: tuple[Transaction, ...]
    block_hash: bytes = b""

    def hash_prefix(self) -> bytes:
        return canonical_json(
            {
                "height": self.height,
                "prev_hash": self.prev_hash.hex(),
                "timestamp": self.timestamp,
                "miner": self.miner,
                "difficulty": self.difficulty,
                "txs": [t.to_json() for t in self.txs],
            }
        )

    def compute_hash(self) -> bytes:
        return hashlib.sha256(self.hash_prefix() + self.pow_nonce.to_bytes(8, "big")).digest()

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "timestamp": self.timestamp,
            "miner": self.miner,
            "difficulty": self.difficulty,
            "pow_nonce": self.pow_nonce,
            "txs": [t.to_json() for t in self.txs],
            "block_hash": self.block_hash.hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Block":
        return cls(
            height=obj["height"],
            prev_hash=bytes.fromhex(obj["prev_hash"]),
            timestamp=obj["timestamp"],
            miner=obj["miner"],
            difficulty=obj["difficulty"],
            pow_nonce=obj["pow_nonce"],
            txs=tuple(Transaction.from_json(t) for t in obj["txs"]),
            block_hash=bytes.fromhex(obj["block_hash"]),
        )


def solve_pow(block: Block) -> Block:
    """Increment ``pow_nonce`` from zero until the hash clears the difficulty."""
    base = hashlib.sha256(block.hash_prefix())
    nonce = 0
    while True:
        h = base.copy()
        h.update(nonce.to_bytes(8, "big"))
        digest = h.digest()
        if leading_zero_bits(digest) >= block.difficulty:
            return replace(block, pow_nonce=nonce, block_hash=digest)
        nonce += 1


@dataclass
class LedgerConfig:
    allocations: dict[Address, int] = field(default_factory=dict)
    difficulty: int = 0
    block_reward: int = BLOCK_REWARD
    allow_empty_blocks: bool = False

    @property
    def genesis_supply(self) -> int:
        return sum(self.allocations.values())

    def to_json(self) -> dict:
        return {
            "allocations": dict(sorted(self.allocations.items())),
            "difficulty": self.difficulty,
            "block_reward": self.block_reward,
            "allow_empty_blocks": self.allow_empty_blocks,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LedgerConfig":
        return cls(
            allocations={k: int(v) for k, v in obj.get("allocations", {}).items()},
            difficulty=int(obj.get("difficulty", 0)),
            block_reward=int(obj.get("block_reward", BLOCK_REWARD)),
            allow_empty_blocks=bool(obj.get("allow_empty_blocks", False)),
        )


@dataclass
class LedgerState:
    balances: dict[Address, int]
    nonces: dict[Address, int]
    chain: list[Block] = field(default_factory=list)
    mempool: list[Transaction] = field(default_factory=list)
    contracts: ContractState = field(default_factory=ContractState)

    @classmethod
    def genesis(cls, config: LedgerConfig) -> "LedgerState":
        return cls(balances=dict(config.allocations), nonces={})

    def copy(self) -> "LedgerState":
        return LedgerState(
            dict(self.balances), dict(self.nonces), list(self.chain), list(self.mempool), self.contracts.copy()
        )

    def balance(self, address: Address) -> int:
        return self.balances.get(address, 0)

    def total_supply(self) -> int:
        return sum(self.balances.values())


def _apply_tx(state: LedgerState, tx: Transaction, timestamp: int) -> int:
    """Validate and execute ``tx`` against ``state`` in place; return the fee charged."""
    if derive_address(tx.public_key) != tx.sender or not verify_signature(tx):
        raise BadSignature(f"transaction {tx.tx_hash.hex()[:16]} has an invalid signature")
    expected = state.nonces.get(tx.sender, 0)
    if tx.nonce != expected:
        raise BadNonce(f"nonce {tx.nonce} from {tx.sender}, expected {expected}")
    fee = estimate_fee(tx)
    if state.balance(tx.sender) < fee:
        raise InsufficientBalance(f"{tx.sender} cannot cover fee {fee}")

    if tx.contract is Contract.TRANSFER:
        try:
            args = json.loads(tx.payload)
            to, amount = args["to"], args["amount"]
        except (ValueError, KeyError, TypeError):
            raise contracts.BadCall("malformed transfer") from None
        if tx.method != "transfer" or not isinstance(amount, int) or amount < 0:
            raise contracts.BadCall("malformed transfer")
        if state.balance(tx.sender) < fee + amount:
            raise InsufficientBalance(f"{tx.sender} cannot cover fee {fee} plus {amount}")
        state.balances[tx.sender] -= amount
        state.balances[to] = state.balance(to) + amount
    else:
        contracts.apply_call(state.contracts, tx.sender, tx.contract, tx.method, tx.payload, timestamp)

    state.balances[tx.sender] -= fee
    state.nonces[tx.sender] = expected + 1
    return fee


def _credit_block(state: LedgerState, block: Block, fees: int, config: LedgerConfig) -> None:
    state.balances[block.miner] = state.balance(block.miner) + fees + config.block_reward
    state.chain.append(block)


@dataclass
class ChainReport:
    ok: bool
    reasons: list[str]

    def __bool__(self) -> bool:
        return self.ok


def _check_block(block: Block, index: int, parent: Optional[Block], config: LedgerConfig) -> list[str]:
    why = []
    if block.height != index:
        why.append(f"block {index}: height {block.height}")
    expected_prev = ZERO_HASH if parent is None else parent.block_hash
    if block.prev_hash != expected_prev:
        why.append(f"block {index}: prev_hash does not link to parent")
    if parent is not None and block.timestamp <= parent.timestamp:
        why.append(f"block {index}: timestamp not after parent")
    if block.difficulty != config.difficulty:
        why.append(f"block {index}: difficulty {block.difficulty} != {config.difficulty}")
    if block.compute_hash() != block.block_hash:
        why.append(f"block {index}: hash mismatch")
    elif leading_zero_bits(block.block_hash) < block.difficulty:
        why.append(f"block {index}: proof of work below difficulty")
    for j, tx in enumerate(block.txs):
        if tx.compute_hash() != tx.tx_hash:
            why.append(f"block {index} tx {j}: tx_hash mismatch")
    return why


def _replay(chain: Iterable[Block], config: LedgerConfig) -> tuple[LedgerState, list[str]]:
    state = LedgerState.genesis(config)
    parent = None
    for i, block in enumerate(chain):
        reasons = _check_block(block, i, parent, config)
        if reasons:
            return state, reasons
        fees = 0
        for j, tx in enumerate(block.txs):
            try:
                fees += _apply_tx(state, tx, block.timestamp)
            except (LedgerError, ContractError) as exc:
                return state, [f"block {i} tx {j}: {type(exc).__name__}: {exc}"]
        _credit_block(state, block, fees, config)
        parent = block
    return state, []


def verify_chain(chain: list[Block], config: LedgerConfig) -> ChainReport:
    _, reasons = _replay(chain, config)
    return ChainReport(not reasons, reasons)


def replay_state(chain: list[Block], config: LedgerConfig) -> LedgerState:
    state, reasons = _replay(chain, config)
    if reasons:
        raise InvalidChain("; ".join(reasons))
    return state


def read_chain(path: Path) -> list[Block]:
    path = Path(path)
    if not path.exists():
        return []
    with path.open("r", encoding="utf-8") as fh:
        return [Block.from_json(json.loads(line)) for line in fh if line.strip()]


class Ledger:
    """Mutable front end over a replayed chain. Callers serialize writes."""

    def __init__(self, config: LedgerConfig, chain: Optional[list[Block]] = None, chain_path: Optional[Path] = None):
        self.config = config
        self.chain_path = Path(chain_path) if chain_path else None
        self.state = replay_state(list(chain or []), config)
        self._pending = self.state.copy()

    @classmethod
    def create(cls, home: Path, config: LedgerConfig) -> "Ledger":
        home = Path(home)
        home.mkdir(parents=True, exist_ok=True)
        (home / CONFIG_FILE).write_text(json.dumps(config.to_json(), indent=2) + "\n")
        (home / CHAIN_FILE).touch()
        return cls(config, [], home / CHAIN_FILE)

    @classmethod
    def open(cls, home: Path) -> "Ledger":
        home = Path(home)
        config = LedgerConfig.from_json(json.loads((home / CONFIG_FILE).read_text()))
        return cls(config, read_chain(home / CHAIN_FILE), home / CHAIN_FILE)

    @property
    def chain(self) -> list[Block]:
        return self.state.chain

    @property
    def mempool(self) -> list[Transaction]:
        return self._pending.mempool

    @property
    def contracts(self) -> ContractState:
        return self.state.contracts

    @property
    def pending_contracts(self) -> ContractState:
        return self._pending.contracts

    def balance(self, address: Address) -> int:
        return self.state.balance(address)

    def next_nonce(self, address: Address) -> int:
        return self._pending.nonces.get(address, 0)

    def next_timestamp(self, now: int) -> int:
        if not self.chain:
            return now
        return max(now, self.chain[-1].timestamp + 1)

    def submit_tx(self, tx: Transaction) -> bytes:
        trial = self._pending.copy()
        _apply_tx(trial, tx, self.next_timestamp(0))
        trial.mempool.append(tx)
        self._pending = trial
        logger.debug("accepted tx %s", tx.tx_hash.hex())
        return tx.tx_hash

    def mine_block(self, miner: Address, now: int) -> Block:
        txs = tuple(self._pending.mempool)
        if not txs and not self.config.allow_empty_blocks:
            raise NothingToMine("mempool is empty")
        parent = self.chain[-1] if self.chain else None
        if parent is not None and now <= parent.timestamp:
            raise BadTimestamp(f"block time {now} not after parent {parent.timestamp}")
        block = solve_pow(
            Block(
                height=len(self.chain),
                prev_hash=parent.block_hash if parent else ZERO_HASH,
                timestamp=now,
                miner=miner,
                difficulty=self.config.difficulty,
                pow_nonce=0,
                txs=txs,
            )
        )
        state = self.state.copy()
        state.mempool = []
        fees = sum(_apply_tx(state, tx, block.timestamp) for tx in txs)
        _credit_block(state, block, fees, self.config)
        self._persist(block)
        self.state = state
        self._pending = state.copy()
        logger.info("mined block %d with %d txs", block.height, len(txs))
        return block

    def _persist(self, block: Block) -> None:
        if self.chain_path is None:
            return
        with self.chain_path.open("ab") as fh:
            fh.write(canonical_json(block.to_json()) + b"\n")
            fh.flush()
            os.fsync(fh.fileno())

    def verify(self) -> ChainReport:
        return verify_chain(self.chain, self.config)
