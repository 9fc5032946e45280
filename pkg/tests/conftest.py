import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from healthvault.envelope import AsymScheme, gen_asym_keypair


@pytest.fixture(scope="session")
def rsa_keys():
    return gen_asym_keypair(AsymScheme.RSA3072)


@pytest.fixture(scope="session")
def ec_keys():
    return gen_asym_keypair(AsymScheme.ECIES_SECP256K1)


@pytest.fixture(scope="session", params=["rsa", "ecc"])
def keys(request, rsa_keys, ec_keys):
    return rsa_keys if request.param == "rsa" else ec_keys

from healthvault.ledger import Ledger, LedgerConfig
from healthvault.wallet import create_wallet, new_transaction, sign_tx

ALICE = create_wallet(b"alice-test-seed!", "alice")
BOB = create_wallet(b"bob-test-seed!!!", "bob")
CAROL = create_wallet(b"carol-test-seed!", "carol")
MINER = create_wallet(b"miner-test-seed!", "miner")
GENESIS = {ALICE.address: 10**9, BOB.address: 10**9, CAROL.address: 0}


@pytest.fixture
def config():
    return LedgerConfig(dict(GENESIS))


@pytest.fixture
def ledger(config):
    return Ledger(config)


def signed(ledger, wallet, call, gas_price=1):
    return sign_tx(new_transaction(wallet, ledger.next_nonce(wallet.address), call, gas_price), wallet)


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
