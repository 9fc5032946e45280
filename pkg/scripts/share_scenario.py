"""Run the owner/grantee sharing flow once per scheme and print timings and chain stats.

    python scripts/share_scenario.py [--size BYTES] [--seed TEXT] [--keep DIR]
"""

import argparse
import random
import shutil
import tempfile
import time
from pathlib import Path

from healthvault.cas import ContentStore
from healthvault.contracts import NotOwner
from healthvault.dapp import AccessExpired, DApp, login
from healthvault.envelope import AsymScheme
from healthvault.ledger import Ledger, LedgerConfig
from healthvault.wallet import create_wallet


def run(home: Path, scheme: AsymScheme, size: int, seed: bytes) -> None:
    alice = create_wallet(b"scenario/alice/" + seed, "alice")
    bob = create_wallet(b"scenario/bob/" + seed, "bob")
    miner = create_wallet(b"scenario/miner/" + seed, "miner")
    ledger = Ledger.create(home, LedgerConfig({alice.address: 10**12, bob.address: 10**12}))
    app = DApp(ledger, ContentStore(home), miner.address, rng_seed=seed.ljust(32, b"."))

    t0 = 1_700_000_000
    clock = {"alice": t0, "bob": t0}
    timings = {}

    start = time.perf_counter()
    sa = login(alice, scheme, clock=lambda: clock["alice"])
    sb = login(bob, scheme, clock=lambda: clock["bob"])
    timings["login x2"] = time.perf_counter() - start

    content = random.Random(seed).randbytes(size)
    start = time.perf_counter()
    fid = app.store_file(sa, content, "MRI scan", "application/dicom")
    timings["store"] = time.perf_counter() - start

    try:
        app.fetch_file(sb, fid)
        raise SystemExit("bob read alice's file without a grant")
    except NotOwner:
        pass

    start = time.perf_counter()
    gid = app.grant_access(sa, fid, bob.address, sb.keys.public_key, t0, t0 + 3600, "one hour")
    timings["grant"] = time.perf_counter() - start

    outcome = {}
    for offset in (-1, 0, 3599, 3600):
        clock["bob"] = t0 + offset
        try:
            outcome[offset] = app.fetch_shared(sb, gid) == content
        except AccessExpired:
            outcome[offset] = "refused"

    chain_bytes = (home / "chain.jsonl").stat().st_size
    print(f"== {scheme.value}")
    for name, secs in timings.items():
        print(f"  {name:<10} {secs * 1000:8.1f} ms")
    print(f"  bob access by offset from window start: {outcome}")
    print(f"  blocks {len(ledger.chain)}, chain file {chain_bytes} bytes, CAS nodes {app.store.node_count()}")
    print(f"  alice balance {ledger.balance(alice.address)}, miner balance {ledger.balance(miner.address)}")
    print(f"  chain verifies: {bool(ledger.verify())}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=300 * 1024)
    parser.add_argument("--seed", default="scenario-seed")
    parser.add_argument("--keep", type=Path, default=None, help="write state here instead of a temp dir")
    args = parser.parse_args()

    for scheme in AsymScheme:
        if args.keep:
            home = args.keep / scheme.value
            shutil.rmtree(home, ignore_errors=True)
            run(home, scheme, args.size, args.seed.encode())
        else:
            with tempfile.TemporaryDirectory() as tmp:
                run(Path(tmp), scheme, args.size, args.seed.encode())


if __name__ == "__main__":
    main()
