"""Time proof-of-work mining across difficulties.

    python scripts/pow_timing.py [--max-difficulty 16] [--blocks 5]
"""

import argparse
import statistics
import time

from healthvault.ledger import Ledger, LedgerConfig, leading_zero_bits, transfer_call, verify_chain
from healthvault.wallet import create_wallet, new_transaction, sign_tx


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--max-difficulty", type=int, default=16)
    parser.add_argument("--blocks", type=int, default=5)
    args = parser.parse_args()

    payer = create_wallet(b"pow-timing/payer", "payer")
    miner = create_wallet(b"pow-timing/miner", "miner")
    print(f"{'bits':>4} {'mean ms':>10} {'max ms':>10} {'mean nonce':>12}")
    for difficulty in range(0, args.max_difficulty + 1, 4):
        config = LedgerConfig({payer.address: 10**12}, difficulty=difficulty)
        ledger = Ledger(config)
        times, nonces = [], []
        for h in range(args.blocks):
            tx = new_transaction(payer, ledger.next_nonce(payer.address), transfer_call(miner.address, 1), 1)
            ledger.submit_tx(sign_tx(tx, payer))
            start = time.perf_counter()
            block = ledger.mine_block(miner.address, h + 1)
            times.append(time.perf_counter() - start)
            nonces.append(block.pow_nonce)
            assert leading_zero_bits(block.block_hash) >= difficulty
        assert verify_chain(ledger.chain, config)
        print(
            f"{difficulty:>4} {statistics.mean(times) * 1000:>10.2f} {max(times) * 1000:>10.2f}"
            f" {statistics.mean(nonces):>12.0f}"
        )


if __name__ == "__main__":
    main()
