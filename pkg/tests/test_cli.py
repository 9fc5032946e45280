import io
import json

import pytest

from healthvault.cli import main, parse_time


def run(home, *argv, now=None):
    args = ["--home", str(home)]
    if now:
        args += ["--now", now]
    return main(args + list(argv))


@pytest.fixture
def setup(tmp_path, capsys):
    home = tmp_path / "home"
    for name in ("alice", "bob"):
        assert run(home, "wallet", "create", "--out", str(tmp_path / f"{name}.json"), "--seed", (name * 8).encode().hex()) == 0
    addrs = {n: json.loads((tmp_path / f"{n}.json").read_text())["address"] for n in ("alice", "bob")}
    assert run(home, "init", "--alloc", f"{addrs['alice']}=1000000000", "--alloc", f"{addrs['bob']}=1000000000") == 0
    capsys.readouterr()
    return tmp_path, home, addrs


def login_as(tmp_path, home, name, keys=None):
    argv = ["login", "--wallet", str(tmp_path / f"{name}.json"), "--scheme", "ecc"]
    if keys:
        argv += ["--keys", str(keys)]
    else:
        argv += ["--save-keys", str(tmp_path / f"{name}-keys.json")]
    assert run(home, *argv) == 0


def test_parse_time():
    assert parse_time("1970-01-01T00:01:00Z") == 60
    assert parse_time("1970-01-01T01:00:00+01:00") == 0


def test_full_flow(setup, capsys):
    tmp_path, home, addrs = setup
    doc = tmp_path / "scan.bin"
    doc.write_bytes(b"MRI" * 1000)

    login_as(tmp_path, home, "bob")
    assert (tmp_path / "bob-keys.pub").read_text().startswith("ecies-secp256k1\n")
    login_as(tmp_path, home, "alice")
    assert run(home, "upload", str(doc), "--desc", "knee MRI", "--type", "application/octet-stream", "--yes",
               now="2024-01-01T00:00:00Z") == 0
    assert run(home, "ls") == 0
    assert "knee MRI" in capsys.readouterr().out
    assert run(home, "get", "0", "--out", str(tmp_path / "back.bin")) == 0
    assert (tmp_path / "back.bin").read_bytes() == doc.read_bytes()

    assert run(home, "grant", "0", "--to", addrs["bob"], "--pub", str(tmp_path / "bob-keys.pub"),
               "--from", "2024-01-01T00:00:00Z", "--until", "2024-01-01T01:00:00Z", "--desc", "for Bob", "--yes",
               now="2024-01-01T00:00:00Z") == 0

    login_as(tmp_path, home, "bob", keys=tmp_path / "bob-keys.json")
    assert run(home, "shared", now="2024-01-01T00:30:00Z") == 0
    assert "live" in capsys.readouterr().out
    assert run(home, "fetch", "0", "--out", str(tmp_path / "bob.bin"), now="2024-01-01T00:59:59Z") == 0
    assert (tmp_path / "bob.bin").read_bytes() == doc.read_bytes()
    assert run(home, "fetch", "0", "--out", str(tmp_path / "late.bin"), now="2024-01-01T01:00:00Z") == 2
    assert "AccessExpired" in capsys.readouterr().err
    assert run(home, "get", "0", "--out", str(tmp_path / "x.bin")) == 2

    assert run(home, "chain", "verify") == 0
    assert "chain ok: 2 blocks" in capsys.readouterr().out


def test_interactive_reject_and_exit_codes(setup, capsys, monkeypatch):
    tmp_path, home, _ = setup
    doc = tmp_path / "d.txt"
    doc.write_text("hello")
    login_as(tmp_path, home, "alice")
    capsys.readouterr()
    monkeypatch.setattr("sys.stdin", io.StringIO("n\n"))
    assert run(home, "upload", str(doc), "--desc", "d", "--type", "text/plain") == 2
    err = capsys.readouterr().err
    assert "— approve? [y/N]" in err and "fee " in err
    assert (home / "chain.jsonl").read_text() == ""

    monkeypatch.setattr("sys.stdin", io.StringIO("y\n"))
    assert run(home, "upload", str(doc), "--desc", "d", "--type", "text/plain") == 0
    assert run(home, "get", "7", "--out", str(tmp_path / "o")) == 4


def test_tampered_chain_detected(setup, capsys):
    tmp_path, home, _ = setup
    doc = tmp_path / "d.txt"
    doc.write_text("hello")
    login_as(tmp_path, home, "alice")
    run(home, "upload", str(doc), "--desc", "original", "--type", "text/plain", "--yes")
    chain = home / "chain.jsonl"
    chain.write_text(chain.read_text().replace('"gas_price":1', '"gas_price":0'))
    assert run(home, "chain", "verify") == 3
    assert "FAIL" in capsys.readouterr().out


def test_tampered_object_is_integrity_error(setup, capsys):
    tmp_path, home, _ = setup
    doc = tmp_path / "d.txt"
    doc.write_text("hello")
    login_as(tmp_path, home, "alice")
    run(home, "upload", str(doc), "--desc", "d", "--type", "text/plain", "--yes")
    (obj,) = [p for p in (home / "objects").rglob("*") if p.is_file()]
    raw = bytearray(obj.read_bytes())
    raw[-1] ^= 1
    obj.write_bytes(bytes(raw))
    assert run(home, "get", "0", "--out", str(tmp_path / "o")) == 3
    assert "[cas.get]" in capsys.readouterr().err


def test_keygen_and_abi(tmp_path, capsys):
    assert main(["--home", str(tmp_path), "keygen", "--scheme", "ecc", "--out", str(tmp_path / "k.json")]) == 0
    assert (tmp_path / "k.pub").exists()
    assert main(["abi", "storage"]) == 0
    doc = json.loads(capsys.readouterr().out.split("\n", 1)[1])
    assert "uploadFile" in [f["name"] for f in doc["abi"]]


def test_not_logged_in(setup, capsys):
    _, home, _ = setup
    assert run(home, "ls") == 1
    assert "not logged in" in capsys.readouterr().err


def test_vault_home_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("VAULT_HOME", str(tmp_path / "envhome"))
    assert main(["init"]) == 0
    assert (tmp_path / "envhome" / "ledger.json").exists()
