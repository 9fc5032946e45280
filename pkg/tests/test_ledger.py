import json
import random
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from healthvault import contracts
from healthvault.contracts import Contract
from healthvault.ledger import (
    BLOCK_REWARD,
    ZERO_HASH,
    BadNonce,
    BadSignature,
    BadTimestamp,
    Block,
    InsufficientBalance,
    InvalidChain,
    Ledger,
    LedgerConfig,
    NothingToMine,
    Transaction,
    derive_address,
    estimate_fee,
    leading_zero_bits,
    read_chain,
    replay_state,
    transfer_call,
    verify_chain,
)

from conftest import ALICE, BOB, CAROL, GENESIS, MINER, signed
from oracles import fee_oracle


def build_chain(ledger, blocks=10, start=1000):
    rng = random.Random(1)
    for h in range(blocks):
        for w in (ALICE, BOB):
            ledger.submit_tx(signed(ledger, w, transfer_call(CAROL.address, rng.randrange(100)), rng.randrange(1, 4)))
        ledger.mine_block(MINER.address, start + h)
    return ledger.chain


def test_fee_examples():
    def tx(gas, n):
        return Transaction(0, "a" * 40, Contract.TRANSFER, "transfer", bytes(n), gas)

    assert estimate_fee(tx(1, 0)) == 21000
    assert estimate_fee(tx(0, 500)) == 0
    assert estimate_fee(tx(2, 100)) == 55600


@given(st.integers(0, 10**6), st.integers(0, 5000))
def test_fee_matches_independent_arithmetic(gas, n):
    assert estimate_fee(Transaction(0, "a" * 40, Contract.STORAGE, "uploadFile", bytes(n), gas)) == fee_oracle(gas, n)


def test_address_derivation():
    assert ALICE.address == derive_address(ALICE.signing_public)
    assert len(ALICE.address) == 40 and ALICE.address == ALICE.address.lower()


def test_leading_zero_bits():
    assert leading_zero_bits(bytes(32)) == 256
    assert leading_zero_bits(b"\x00\x0f" + bytes(30)) == 12
    assert leading_zero_bits(b"\x80" + bytes(31)) == 0


def test_submit_accepts_and_rejects(ledger):
    tx = signed(ledger, ALICE, transfer_call(BOB.address, 5))
    assert ledger.submit_tx(tx) == tx.tx_hash
    with pytest.raises(BadNonce):
        ledger.submit_tx(tx)
    poor = signed(ledger, CAROL, transfer_call(BOB.address, 0))
    with pytest.raises(InsufficientBalance):
        ledger.submit_tx(poor)
    forged = replace(signed(ledger, BOB, transfer_call(ALICE.address, 1)), sender=ALICE.address)
    with pytest.raises(BadSignature):
        ledger.submit_tx(forged)


def test_zero_gas_price_is_free(ledger):
    ledger.submit_tx(signed(ledger, CAROL, transfer_call(BOB.address, 0), gas_price=0))
    ledger.mine_block(MINER.address, 1)
    assert ledger.balance(CAROL.address) == 0


def test_mine_moves_fees_and_mints_reward(ledger):
    tx = signed(ledger, ALICE, transfer_call(BOB.address, 7), gas_price=3)
    ledger.submit_tx(tx)
    block = ledger.mine_block(MINER.address, 100)
    fee = estimate_fee(tx)
    assert ledger.balance(ALICE.address) == 10**9 - fee - 7
    assert ledger.balance(BOB.address) == 10**9 + 7
    assert ledger.balance(MINER.address) == fee + BLOCK_REWARD
    assert block.prev_hash == ZERO_HASH and block.height == 0
    assert ledger.mempool == []


def test_empty_mempool(ledger, config):
    with pytest.raises(NothingToMine):
        ledger.mine_block(MINER.address, 1)
    config.allow_empty_blocks = True
    assert Ledger(config).mine_block(MINER.address, 1).txs == ()


def test_timestamps_must_increase(ledger):
    ledger.submit_tx(signed(ledger, ALICE, transfer_call(BOB.address, 1)))
    ledger.mine_block(MINER.address, 10)
    ledger.submit_tx(signed(ledger, ALICE, transfer_call(BOB.address, 1)))
    with pytest.raises(BadTimestamp):
        ledger.mine_block(MINER.address, 10)
    assert ledger.next_timestamp(10) == 11


def test_difficulty_8_gives_zero_first_byte(config):
    config.difficulty = 8
    ledger = Ledger(config)
    ledger.submit_tx(signed(ledger, ALICE, transfer_call(BOB.address, 1)))
    block = ledger.mine_block(MINER.address, 1)
    assert block.block_hash[0] == 0
    assert verify_chain(ledger.chain, config)


def test_difficulty_zero_takes_first_nonce(ledger):
    ledger.submit_tx(signed(ledger, ALICE, transfer_call(BOB.address, 1)))
    assert ledger.mine_block(MINER.address, 1).pow_nonce == 0


def test_fresh_chain_verifies_and_conserves(ledger, config):
    chain = build_chain(ledger)
    assert verify_chain(chain, config)
    state = replay_state(chain, config)
    assert state.total_supply() == config.genesis_supply + BLOCK_REWARD * len(chain)
    assert state.nonces[ALICE.address] == 10


def test_nonce_sequence_has_no_gaps(ledger):
    chain = build_chain(ledger, blocks=5)
    seen = {}
    for block in chain:
        for tx in block.txs:
            assert tx.nonce == seen.get(tx.sender, 0)
            seen[tx.sender] = tx.nonce + 1


def test_payload_mutation_fails(ledger, config):
    chain = build_chain(ledger, blocks=5)
    tx = chain[2].txs[0]
    bad_tx = replace(tx, payload=bytes([tx.payload[0] ^ 1]) + tx.payload[1:])
    chain[2] = replace(chain[2], txs=(bad_tx,) + chain[2].txs[1:])
    report = verify_chain(chain, config)
    assert not report
    assert any("hash mismatch" in r for r in report.reasons)


def test_reordered_blocks_fail(ledger, config):
    chain = build_chain(ledger, blocks=4)
    chain[1], chain[2] = chain[2], chain[1]
    assert not verify_chain(chain, config)


def test_rehashed_forgery_still_fails(ledger, config):
    # recomputing hashes after editing a tx does not help: its signature breaks
    from healthvault.ledger import solve_pow

    chain = build_chain(ledger, blocks=3)
    tx = replace(chain[2].txs[0], gas_price=0)
    tx = replace(tx, tx_hash=tx.compute_hash())
    chain[2] = solve_pow(replace(chain[2], txs=(tx,) + chain[2].txs[1:]))
    report = verify_chain(chain, config)
    assert not report and "BadSignature" in report.reasons[0]


def test_difficulty_downgrade_fails(config):
    config.difficulty = 4
    ledger = Ledger(config)
    build_chain(ledger, blocks=2)
    assert not verify_chain(ledger.chain, LedgerConfig(dict(GENESIS), difficulty=0))


def test_replay_is_deterministic_and_incremental(ledger, config):
    chain = build_chain(ledger, blocks=6)
    a, b = replay_state(chain, config), replay_state(chain, config)
    assert a.balances == b.balances and a.nonces == b.nonces
    assert replay_state([], config).balances == GENESIS
    incremental = Ledger(config)
    for block in chain:
        incremental = Ledger(config, incremental.chain + [block])
    assert incremental.state.balances == a.balances


def test_replay_rejects_invalid(ledger, config):
    chain = build_chain(ledger, blocks=2)
    chain[0] = replace(chain[0], timestamp=chain[0].timestamp + 1)
    with pytest.raises(InvalidChain):
        replay_state(chain, config)


def test_contract_calls_validated_at_submit(ledger):
    from healthvault.envelope import AsymScheme, WrappedBlob

    blob = WrappedBlob(AsymScheme.ECIES_SECP256K1, b"\x01" * 40)
    ledger.submit_tx(signed(ledger, ALICE, contracts.storage_upload(blob, blob, "d", "t", 3)))
    ledger.mine_block(MINER.address, 5)
    raw = contracts.Call(
        Contract.PERMISSION,
        "grantPermission",
        contracts.canonical_json(
            {
                "fileId": 0, "grantee": CAROL.address, "encCidForGrantee": blob.to_json(),
                "encDataKeyForGrantee": blob.to_json(), "description": "", "fileType": "t",
                "validFrom": 0, "validUntil": 10,
            }
        ),
    )
    with pytest.raises(contracts.NotOwner):
        ledger.submit_tx(signed(ledger, BOB, raw))
    assert ledger.next_nonce(BOB.address) == 0


def test_persistence_roundtrip(tmp_path, config):
    ledger = Ledger.create(tmp_path, config)
    build_chain(ledger, blocks=3)
    lines = (tmp_path / "chain.jsonl").read_text().splitlines()
    assert len(lines) == 3
    assert json.loads(lines[0])["height"] == 0
    assert read_chain(tmp_path / "chain.jsonl") == ledger.chain
    reopened = Ledger.open(tmp_path)
    assert reopened.state.balances == ledger.state.balances
    assert Block.from_json(ledger.chain[1].to_json()) == ledger.chain[1]
