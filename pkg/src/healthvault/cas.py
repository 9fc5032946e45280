"""Local content-addressed object store.

Blobs are cut into 256 KiB chunks, each chunk becomes a leaf node, and leaves
are linked bottom-up into interior nodes of at most 174 children until a
single root remains. A node's CID is ``"cidv1-"`` followed by the hex SHA-256
of its canonical encoding::

    kind (1 byte: 0 leaf, 1 interior) | total_size (u64 BE) | leaf data or child CIDs

Objects live at ``<root>/objects/<first 2 hex>/<64 hex>``.
"""

from __future__ import annotations

import enum
import hashlib
import os
import struct
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import IntegrityError, NotFoundError, VaultError

CHUNK_SIZE = 262144
FANOUT = 174
CID_PREFIX = "cidv1-"
CID_LEN = len(CID_PREFIX) + 64

CID = str


class StoreError(VaultError):
    pass


class NotFound(StoreError, NotFoundError):
    pass


class IntegrityFailure(StoreError, IntegrityError):
    pass


class StorageFailure(StoreError):
    pass


class EmptyChunkList(StoreError, ValueError):
    pass


class NodeKind(enum.IntEnum):
    LEAF = 0
    INTERIOR = 1


@dataclass(frozen=True)
class MerkleNode:
    kind: NodeKind
    total_size: int
    data: bytes = b""
    children: tuple[CID, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.kind is NodeKind.LEAF:
            if self.children or self.total_size != len(self.data):
                raise ValueError("leaf must carry data only, sized by its data")
        elif self.data or not self.children:
            raise ValueError("interior node must carry children only")

    def encode(self) -> bytes:
        head = struct.pack(">BQ", self.kind, self.total_size)
        if self.kind is NodeKind.LEAF:
            return head + self.data
        return head + "".join(self.children).encode("ascii")

    @classmethod
    def decode(cls, raw: bytes) -> "MerkleNode":
        if len(raw) < 9:
            raise ValueError("node shorter than its header")
        kind, total = struct.unpack_from(">BQ", raw)
        body = raw[9:]
        if kind == NodeKind.LEAF:
            return cls(NodeKind.LEAF, total, data=body)
        if kind != NodeKind.INTERIOR or not body or len(body) % CID_LEN:
            raise ValueError("malformed interior node")
        text = body.decode("ascii")
        kids = tuple(text[i : i + CID_LEN] for i in range(0, len(text), CID_LEN))
        return cls(NodeKind.INTERIOR, total, children=kids)


def cid_of(node: MerkleNode) -> CID:
    return CID_PREFIX + hashlib.sha256(node.encode()).hexdigest()


def is_cid(text: str) -> bool:
    if len(text) != CID_LEN or not text.startswith(CID_PREFIX):
        return False
    digest = text[len(CID_PREFIX) :]
    return all(c in "0123456789abcdef" for c in digest)


def chunk_bytes(blob: bytes) -> list[bytes]:
    if not blob:
        return [b""]
    return [bytes(blob[i : i + CHUNK_SIZE]) for i in range(0, len(blob), CHUNK_SIZE)]


def dag_nodes(chunks: list[bytes]) -> tuple[CID, dict[CID, MerkleNode]]:
    """Build the DAG over ``chunks``; return the root CID and every node by CID."""
    if not chunks:
        raise EmptyChunkList("cannot build a DAG from zero chunks")
    nodes: dict[CID, MerkleNode] = {}
    level: list[tuple[CID, MerkleNode]] = []
    for chunk in chunks:
        leaf = MerkleNode(NodeKind.LEAF, len(chunk), data=chunk)
        level.append((cid_of(leaf), leaf))
    nodes.update(level)
    while len(level) > 1:
        parents = []
        for i in range(0, len(level), FANOUT):
            group = level[i : i + FANOUT]
            node = MerkleNode(
                NodeKind.INTERIOR,
                sum(n.total_size for _, n in group),
                children=tuple(c for c, _ in group),
            )
            parents.append((cid_of(node), node))
        nodes.update(parents)
        level = parents
    return level[0][0], nodes


def build_dag(chunks: list[bytes]) -> MerkleNode:
    root, nodes = dag_nodes(chunks)
    return nodes[root]


class ContentStore:
    """Filesystem-backed node store. One writer at a time; reads are lock-free."""

    def __init__(self, root: os.PathLike | str):
        self.root = Path(root)
        self.objects = self.root / "objects"
        self._write_lock = threading.Lock()

    def path_for(self, cid: CID) -> Path:
        digest = cid[len(CID_PREFIX) :]
        return self.objects / digest[:2] / digest

    def _write_node(self, cid: CID, raw: bytes) -> None:
        dest = self.path_for(cid)
        if dest.exists():
            return
        dest.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(raw)
            os.replace(tmp, dest)
        except OSError as exc:
            Path(tmp).unlink(missing_ok=True)
            raise StorageFailure(f"could not persist {cid}: {exc}") from exc

    def put(self, blob: bytes) -> CID:
        root, nodes = dag_nodes(chunk_bytes(blob))
        with self._write_lock:
            for cid, node in nodes.items():
                self._write_node(cid, node.encode())
        return root

    def has(self, cid: CID) -> bool:
        return is_cid(cid) and self.path_for(cid).is_file()

    def _load(self, cid: CID) -> MerkleNode:
        if not is_cid(cid):
            raise NotFound(f"not a CID: {cid!r}")
        try:
            raw = self.path_for(cid).read_bytes()
        except FileNotFoundError:
            raise NotFound(f"no object {cid}") from None
        if CID_PREFIX + hashlib.sha256(raw).hexdigest() != cid:
            raise IntegrityFailure(f"object {cid} no longer matches its hash")
        try:
            return MerkleNode.decode(raw)
        except ValueError as exc:
            raise IntegrityFailure(f"object {cid} is malformed: {exc}") from None

    def _leaves(self, cid: CID) -> Iterator[bytes]:
        node = self._load(cid)
        if node.kind is NodeKind.LEAF:
            yield node.data
            return
        produced = 0
        for child in node.children:
            for data in self._leaves(child):
                produced += len(data)
                yield data
        if produced != node.total_size:
            raise IntegrityFailure(f"object {cid} size disagrees with its children")

    def get(self, cid: CID) -> bytes:
        return b"".join(self._leaves(cid))

    def verify(self, cid: CID) -> bool:
        try:
            for _ in self._leaves(cid):
                pass
        except StoreError:
            return False
        return True

    def iter_cids(self) -> Iterator[CID]:
        if not self.objects.exists():
            return
        for path in sorted(self.objects.glob("*/*")):
            if not path.name.startswith("."):
                yield CID_PREFIX + path.name

    def node_count(self) -> int:
        return sum(1 for _ in self.iter_cids())
