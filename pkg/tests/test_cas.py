import hashlib
import os
import random

import pytest
from hypothesis import given, settings, strategies as st

from healthvault.cas import (
    CHUNK_SIZE,
    FANOUT,
    ContentStore,
    EmptyChunkList,
    IntegrityFailure,
    MerkleNode,
    NodeKind,
    NotFound,
    build_dag,
    chunk_bytes,
    cid_of,
    dag_nodes,
)

# sha256sum over the 9-byte encoding 00 | 00*8, computed with coreutils
EMPTY_LEAF_CID = "cidv1-3e7077fd2f66d689e0cee6a7cf5b37bf2dca7c979af356d0a31cbc5c85605c7d"


@pytest.fixture
def store(tmp_path):
    return ContentStore(tmp_path)


def _leaf_sizes(nodes, cid):
    node = nodes[cid]
    if node.kind is NodeKind.LEAF:
        return [len(node.data)]
    return [s for c in node.children for s in _leaf_sizes(nodes, c)]


def test_chunking_boundaries():
    mib = os.urandom(1 << 20)
    chunks = chunk_bytes(mib)
    assert [len(c) for c in chunks] == [CHUNK_SIZE] * ((1 << 20) // 262144)
    assert b"".join(chunks) == mib
    assert chunk_bytes(b"") == [b""]
    assert [len(c) for c in chunk_bytes(bytes(262145))] == [262144, 1]


def test_build_dag_shapes():
    one = build_dag([b"abc"])
    assert one.kind is NodeKind.LEAF and one.data == b"abc"

    blob = os.urandom(3 * CHUNK_SIZE + 17)
    root = build_dag(chunk_bytes(blob))
    assert len(root.children) == 4
    assert root.total_size == sum(len(c) for c in chunk_bytes(blob)) == len(blob)

    with pytest.raises(EmptyChunkList):
        build_dag([])


def test_two_level_dag_at_175_chunks():
    chunks = [bytes([i % 256]) * 3 for i in range(FANOUT + 1)]
    root_cid, nodes = dag_nodes(chunks)
    root = nodes[root_cid]
    assert len(root.children) == 2
    first, second = (nodes[c] for c in root.children)
    assert len(first.children) == 174 and len(second.children) == 1
    assert all(nodes[c].kind is NodeKind.LEAF for c in first.children + second.children)
    assert _leaf_sizes(nodes, root_cid) == [3] * 175
    assert root.total_size == 525


def test_cid_format_and_vector():
    empty = MerkleNode(NodeKind.LEAF, 0, data=b"")
    assert empty.encode() == b"\x00" + bytes(8)
    assert cid_of(empty) == EMPTY_LEAF_CID
    assert cid_of(empty) == "cidv1-" + hashlib.sha256(b"\x00" * 9).hexdigest()
    assert len(EMPTY_LEAF_CID) == 70
    a = MerkleNode(NodeKind.LEAF, 1, data=b"a")
    assert cid_of(a) == cid_of(MerkleNode(NodeKind.LEAF, 1, data=b"a"))
    assert cid_of(a) != cid_of(MerkleNode(NodeKind.LEAF, 1, data=b"b"))


def test_node_encoding_roundtrip():
    root_cid, nodes = dag_nodes(chunk_bytes(bytes(CHUNK_SIZE * 2 + 1)))
    for node in nodes.values():
        assert MerkleNode.decode(node.encode()) == node


@settings(max_examples=20, deadline=None)
@given(size=st.integers(0, 2 * (1 << 20)), seed=st.integers(0, 2**32))
def test_get_put_roundtrip(tmp_path_factory, size, seed):
    store = ContentStore(tmp_path_factory.mktemp("cas"))
    blob = random.Random(seed).randbytes(size)
    cid = store.put(blob)
    assert store.get(cid) == blob
    assert store.has(cid) and store.verify(cid)


def test_put_is_idempotent(store):
    blob = os.urandom(CHUNK_SIZE + 5)
    cid = store.put(blob)
    count = store.node_count()
    assert store.put(blob) == cid
    assert store.node_count() == count == 3


def test_shared_prefix_leaf_stored_once(store):
    prefix = os.urandom(CHUNK_SIZE)
    store.put(prefix + b"one")
    before = store.node_count()
    store.put(prefix + b"two")
    # new tail leaf and new root only; the shared 256 KiB leaf is reused
    assert store.node_count() - before == 2


def test_insertion_order_does_not_change_cids(tmp_path):
    blobs = [os.urandom(n) for n in (0, 10, CHUNK_SIZE, CHUNK_SIZE + 1)]
    a = ContentStore(tmp_path / "a")
    b = ContentStore(tmp_path / "b")
    forward = [a.put(x) for x in blobs]
    backward = [b.put(x) for x in reversed(blobs)][::-1]
    assert forward == backward
    assert sorted(a.iter_cids()) == sorted(b.iter_cids())


def test_any_byte_change_changes_root():
    rng = random.Random(7)
    blob = bytearray(rng.randbytes(CHUNK_SIZE + 1000))
    base = cid_of(build_dag(chunk_bytes(bytes(blob))))
    for _ in range(64):
        i = rng.randrange(len(blob))
        mutated = bytearray(blob)
        mutated[i] ^= rng.randrange(1, 256)
        assert cid_of(build_dag(chunk_bytes(bytes(mutated)))) != base


def test_layout_on_disk(store, tmp_path):
    cid = store.put(b"hello")
    digest = cid[len("cidv1-"):]
    path = tmp_path / "objects" / digest[:2] / digest
    assert path.is_file()
    assert hashlib.sha256(path.read_bytes()).hexdigest() == digest


def test_missing_and_unknown(store):
    with pytest.raises(NotFound):
        store.get("cidv1-" + "0" * 64)
    with pytest.raises(NotFound):
        store.get("not-a-cid")
    assert not store.has("cidv1-" + "1" * 64)
    assert not store.verify("cidv1-" + "1" * 64)


def test_tampered_node_detected(store):
    blob = os.urandom(CHUNK_SIZE * 2)
    cid = store.put(blob)
    leaf = build_dag([blob[:CHUNK_SIZE]])
    path = store.path_for(cid_of(leaf))
    raw = bytearray(path.read_bytes())
    raw[100] ^= 1
    path.write_bytes(bytes(raw))
    assert store.has(cid)
    assert not store.verify(cid)
    with pytest.raises(IntegrityFailure):
        store.get(cid)


def test_deleted_node_is_not_found(store):
    cid = store.put(os.urandom(CHUNK_SIZE * 2))
    store.path_for(cid).unlink()
    with pytest.raises(NotFound):
        store.get(cid)
