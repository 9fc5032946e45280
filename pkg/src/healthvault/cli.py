"""``vault`` command line.

State lives under ``$VAULT_HOME`` (default ``~/.vault``)::

    ledger.json     genesis allocations, difficulty, block reward
    chain.jsonl     one canonical-JSON block per line
    objects/        content-addressed ciphertext nodes
    vault.json      miner address and gas price
    session.json    paths of the logged-in wallet and key file

Exit codes: 0 ok, 1 usage or other error, 2 rejected/denied, 3 integrity or
authentication failure, 4 not found.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import contracts, dapp
from .cas import ContentStore
from .envelope import (
    AsymScheme,
    gen_asym_keypair,
    load_keypair,
    load_public_key,
    save_keypair,
    save_public_key,
)
from .errors import VaultError
from .ledger import Ledger, LedgerConfig, read_chain, verify_chain
from .wallet import InteractivePrompt, auto_approve, create_wallet, load_wallet, save_wallet

SESSION_FILE = "session.json"
VAULT_FILE = "vault.json"
DEFAULT_MINER_SEED = b"healthvault/default-miner"


class CliError(VaultError):
    pass


def parse_time(text: str) -> int:
    dt = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def fmt_time(ts: int) -> str:
    return datetime.fromtimestamp(ts, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _scheme(text: str) -> AsymScheme:
    try:
        return AsymScheme.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown scheme {text!r}") from None


class Context:
    def __init__(self, home: Path, now: Optional[int]):
        self.home = home
        self.now = now

    def clock(self) -> int:
        return self.now if self.now is not None else dapp.system_clock()

    def settings(self) -> dict:
        path = self.home / VAULT_FILE
        if not path.exists():
            raise CliError(f"{self.home} is not initialised; run `vault init` first")
        return json.loads(path.read_text())

    def app(self) -> dapp.DApp:
        settings = self.settings()
        return dapp.DApp(
            Ledger.open(self.home), ContentStore(self.home), settings["miner"], settings["gas_price"]
        )

    def session(self) -> dapp.Session:
        path = self.home / SESSION_FILE
        if not path.exists():
            raise CliError("not logged in; run `vault login` first")
        info = json.loads(path.read_text())
        wallet = load_wallet(Path(info["wallet"]))
        scheme = AsymScheme(info["scheme"])
        return dapp.login(wallet, scheme, load_keypair(Path(info["keys"])), clock=self.clock)


def _policy(args):
    return auto_approve if args.yes else InteractivePrompt()


def _write_out(path: str, data: bytes) -> None:
    Path(path).write_bytes(data)
    print(f"wrote {len(data)} bytes to {path}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_init(ctx: Context, args) -> int:
    allocations = {}
    for item in args.alloc:
        addr, _, amount = item.partition("=")
        allocations[addr.lower()] = int(amount)
    miner = args.miner or create_wallet(DEFAULT_MINER_SEED, "miner").address
    Ledger.create(ctx.home, LedgerConfig(allocations, args.difficulty, allow_empty_blocks=args.empty_blocks))
    (ctx.home / VAULT_FILE).write_text(
        json.dumps({"miner": miner, "gas_price": args.gas_price}, indent=2) + "\n"
    )
    print(f"initialised {ctx.home} (difficulty {args.difficulty}, miner {miner})")
    return 0


def cmd_wallet_create(ctx: Context, args) -> int:
    seed = bytes.fromhex(args.seed) if args.seed else secrets.token_bytes(32)
    w = create_wallet(seed, args.label)
    save_wallet(w, Path(args.out))
    print(f"address {w.address}")
    print(f"wallet written to {args.out} (plaintext signing key, keep it private)")
    return 0


def cmd_keygen(ctx: Context, args) -> int:
    kp = gen_asym_keypair(args.scheme)
    out = Path(args.out)
    save_keypair(kp, out)
    pub_out = Path(args.pub_out) if args.pub_out else out.with_suffix(".pub")
    save_public_key(kp.public_key, kp.scheme, pub_out)
    print(f"{kp.scheme.value} keypair written to {out}; public key to {pub_out}")
    return 0


def cmd_login(ctx: Context, args) -> int:
    wallet = load_wallet(Path(args.wallet))
    if args.keys:
        keys_path = Path(args.keys).resolve()
        session = dapp.login(wallet, args.scheme, load_keypair(keys_path), clock=ctx.clock)
    else:
        session = dapp.login(wallet, args.scheme, clock=ctx.clock)
        keys_path = Path(args.save_keys or ctx.home / f"keys-{wallet.address}.json").resolve()
        save_keypair(session.keys, keys_path)
        save_public_key(session.keys.public_key, session.scheme, keys_path.with_suffix(".pub"))
        print("generated a new keypair; save it, you need it to read your files next time:")
        print(f"  keypair:    {keys_path}")
        print(f"  public key: {keys_path.with_suffix('.pub')}")
    ctx.home.mkdir(parents=True, exist_ok=True)
    (ctx.home / SESSION_FILE).write_text(
        json.dumps(
            {"wallet": str(Path(args.wallet).resolve()), "keys": str(keys_path), "scheme": args.scheme.value},
            indent=2,
        )
        + "\n"
    )
    print(f"logged in as {wallet.address} ({args.scheme.value})")
    print(f"public key: {session.keys.public_b64()}")
    return 0


def cmd_logout(ctx: Context, args) -> int:
    (ctx.home / SESSION_FILE).unlink(missing_ok=True)
    print("logged out")
    return 0


def cmd_whoami(ctx: Context, args) -> int:
    s = ctx.session()
    app = ctx.app()
    print(f"address {s.address}")
    print(f"scheme  {s.scheme.value}")
    print(f"balance {app.ledger.balance(s.address)}")
    print(f"public  {s.keys.public_b64()}")
    return 0


def cmd_upload(ctx: Context, args) -> int:
    s, app = ctx.session(), ctx.app()
    content = Path(args.path).read_bytes()
    file_id = app.store_file(s, content, args.desc, args.type, _policy(args))
    print(f"stored file {file_id} ({len(content)} bytes)")
    return 0


def cmd_ls(ctx: Context, args) -> int:
    s, app = ctx.session(), ctx.app()
    views = app.list_my_files(s)
    if not views:
        print("no files")
    for v in views:
        r = v.record
        status = "locked" if v.locked else v.cid
        print(f"{r.file_id:>4}  {fmt_time(r.uploaded_at)}  {r.size_bytes:>10}  {r.file_type:<24} {r.description}  [{status}]")
    return 0


def cmd_get(ctx: Context, args) -> int:
    s, app = ctx.session(), ctx.app()
    _write_out(args.out, app.fetch_file(s, args.file_id))
    return 0


def cmd_grant(ctx: Context, args) -> int:
    s, app = ctx.session(), ctx.app()
    scheme, pub = load_public_key(Path(args.pub))
    if scheme is not s.scheme:
        raise CliError(f"recipient key is {scheme.value} but this session uses {s.scheme.value}")
    grant_id = app.grant_access(
        s, args.file_id, args.to.lower(), pub, parse_time(args.valid_from), parse_time(args.valid_until),
        args.desc, _policy(args),
    )
    print(f"granted access as grant {grant_id}")
    return 0


def cmd_shared(ctx: Context, args) -> int:
    s, app = ctx.session(), ctx.app()
    views = app.list_shared(s)
    if not views:
        print("nothing shared with you")
    for v in views:
        g = v.grant
        status = "live" if v.live else "inactive"
        print(
            f"{g.grant_id:>4}  from {g.granter}  {fmt_time(g.valid_from)} .. {fmt_time(g.valid_until)}"
            f"  {status:<8} {g.file_type:<24} {g.description}"
        )
    return 0


def cmd_fetch(ctx: Context, args) -> int:
    s, app = ctx.session(), ctx.app()
    _write_out(args.out, app.fetch_shared(s, args.grant_id))
    return 0


def cmd_chain_verify(ctx: Context, args) -> int:
    config = LedgerConfig.from_json(json.loads((ctx.home / "ledger.json").read_text()))
    chain = read_chain(ctx.home / "chain.jsonl")
    report = verify_chain(chain, config)
    if report:
        print(f"chain ok: {len(chain)} blocks")
        return 0
    for reason in report.reasons:
        print(f"FAIL {reason}")
    return 3


def cmd_abi(ctx: Context, args) -> int:
    contract = {"storage": contracts.Contract.STORAGE, "permission": contracts.Contract.PERMISSION}[args.contract]
    print(contracts.export_abi(contract).dumps())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vault", description="Encrypted health-record vault")
    parser.add_argument("--home", type=Path, default=None, help="state directory (overrides $VAULT_HOME)")
    parser.add_argument("--now", default=None, help="RFC 3339 time to use instead of the system clock")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a fresh ledger and store")
    p.add_argument("--alloc", action="append", default=[], metavar="ADDR=AMOUNT")
    p.add_argument("--difficulty", type=int, default=0)
    p.add_argument("--miner", default=None)
    p.add_argument("--gas-price", type=int, default=1)
    p.add_argument("--empty-blocks", action="store_true")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("wallet", help="signing accounts")
    wsub = p.add_subparsers(dest="wallet_command", required=True)
    w = wsub.add_parser("create")
    w.add_argument("--out", required=True)
    w.add_argument("--seed", default=None, help="hex seed, at least 16 bytes")
    w.add_argument("--label", default="")
    w.set_defaults(func=cmd_wallet_create)

    p = sub.add_parser("keygen", help="generate an encryption keypair")
    p.add_argument("--scheme", type=_scheme, required=True, help="rsa or ecc")
    p.add_argument("--out", required=True)
    p.add_argument("--pub-out", default=None)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("login")
    p.add_argument("--wallet", required=True)
    p.add_argument("--keys", default=None)
    p.add_argument("--scheme", type=_scheme, required=True, help="rsa or ecc")
    p.add_argument("--save-keys", default=None, help="where to export freshly generated keys")
    p.set_defaults(func=cmd_login)

    sub.add_parser("logout").set_defaults(func=cmd_logout)
    sub.add_parser("whoami").set_defaults(func=cmd_whoami)

    p = sub.add_parser("upload")
    p.add_argument("path")
    p.add_argument("--desc", required=True)
    p.add_argument("--type", required=True)
    p.add_argument("--yes", action="store_true", help="approve the fee without prompting")
    p.set_defaults(func=cmd_upload)

    sub.add_parser("ls").set_defaults(func=cmd_ls)

    p = sub.add_parser("get")
    p.add_argument("file_id", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_get)

    p = sub.add_parser("grant")
    p.add_argument("file_id", type=int)
    p.add_argument("--to", required=True)
    p.add_argument("--pub", required=True)
    p.add_argument("--from", dest="valid_from", required=True)
    p.add_argument("--until", dest="valid_until", required=True)
    p.add_argument("--desc", required=True)
    p.add_argument("--yes", action="store_true")
    p.set_defaults(func=cmd_grant)

    sub.add_parser("shared").set_defaults(func=cmd_shared)

    p = sub.add_parser("fetch")
    p.add_argument("grant_id", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("chain")
    csub = p.add_subparsers(dest="chain_command", required=True)
    csub.add_parser("verify").set_defaults(func=cmd_chain_verify)

    p = sub.add_parser("abi")
    p.add_argument("contract", choices=["storage", "permission"])
    p.set_defaults(func=cmd_abi)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    home = args.home or Path(os.environ.get("VAULT_HOME", Path.home() / ".vault"))
    try:
        now = parse_time(args.now) if args.now else None
    except ValueError:
        print(f"error: bad --now value {args.now!r}", file=sys.stderr)
        return 1
    ctx = Context(Path(home), now)
    try:
        return args.func(ctx, args)
    except VaultError as exc:
        where = getattr(exc, "stage", None)
        label = f" [{where}]" if where else ""
        print(f"error{label}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
