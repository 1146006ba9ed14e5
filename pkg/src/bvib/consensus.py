"""Raft-lite consensus among servers with a hash-linked ledger chain.

Servers cycle through Follower/Candidate/Leader roles. Elections are single
round: every alive node becomes a candidate, casts one uniformly random vote
among the alive candidates, and the plurality winner (ties to the lowest id)
leads the next term. Per-batch ledger entries are collected by the leader
and committed into SHA-256 hash-linked blocks, gated on at least half of the
followers reporting. Paralyzed nodes fall silent (no votes, no reports, no
control messages) but are never Byzantine, and stay down for the whole run.

Block hashing covers a canonical byte serialization (fixed field order,
little-endian integers, IEEE-754 float bit patterns) so chains can be
audited byte for byte across implementations; the JSONL export mirrors the
same fields with hex digests.
"""

import enum
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Role",
    "NetworkDeadError",
    "NodeParalyzedError",
    "NotLeaderError",
    "LedgerEntry",
    "Block",
    "ServerNode",
    "Cluster",
    "GENESIS_PREV_HASH",
    "plurality_winner",
    "elect_leader",
    "record_entry",
    "collect_and_commit",
    "commit_threshold",
    "inject_attack",
    "tick",
    "verify_chain",
    "chain_to_jsonl",
    "chain_from_jsonl",
    "save_chain",
    "load_chain",
    "chain_digest",
]

GENESIS_PREV_HASH = bytes(32)

_KIND_TRAIN = 0
_KIND_TEST = 1


class NetworkDeadError(RuntimeError):
    """No alive node remains to elect."""


class NodeParalyzedError(RuntimeError):
    """The operation requires an alive node."""


class NotLeaderError(RuntimeError):
    """The operation is reserved for the current leader."""


class Role(enum.Enum):
    FOLLOWER = "follower"
    CANDIDATE = "candidate"
    LEADER = "leader"


@dataclass(frozen=True)
class LedgerEntry:
    """One per-batch record: mutual-information bounds while training, a
    prediction digest while testing."""

    epoch: int
    batch: int
    izx_upper: float | None = None
    izy_lower: float | None = None
    digest: bytes | None = None

    def __post_init__(self):
        if self.epoch < 0 or self.batch < 0:
            raise ValueError(f"epoch/batch indices must be non-negative, got "
                             f"({self.epoch}, {self.batch})")
        has_bounds = self.izx_upper is not None and self.izy_lower is not None
        if has_bounds == (self.digest is not None):
            raise ValueError("entry must carry either both bounds or a digest")
        if self.digest is not None and len(self.digest) != 32:
            raise ValueError(f"digest must be 32 bytes, got {len(self.digest)}")

    @classmethod
    def train(cls, epoch: int, batch: int, izx_upper: float, izy_lower: float) -> "LedgerEntry":
        return cls(epoch=epoch, batch=batch, izx_upper=float(izx_upper),
                   izy_lower=float(izy_lower))

    @classmethod
    def test(cls, epoch: int, batch: int, digest: bytes) -> "LedgerEntry":
        return cls(epoch=epoch, batch=batch, digest=bytes(digest))

    @property
    def kind(self) -> str:
        return "train" if self.digest is None else "test"

    def canonical_bytes(self) -> bytes:
        head = struct.pack("<II", self.epoch, self.batch)
        if self.digest is None:
            return head + struct.pack("<Bdd", _KIND_TRAIN, self.izx_upper, self.izy_lower)
        return head + struct.pack("<B", _KIND_TEST) + self.digest


@dataclass(frozen=True)
class Block:
    """Hash-linked aggregation of one batch's ledger entries.

    ``entries`` is a tuple of (server id, entry); ``hash`` covers all
    preceding fields via :func:`block_payload`.
    """

    height: int
    term: int
    prev_hash: bytes
    entries: tuple
    timestamp: float
    hash: bytes


def block_payload(height: int, term: int, prev_hash: bytes, entries, timestamp: float) -> bytes:
    """Canonical bytes that the block hash covers.

    Layout: height u64 LE | term u64 LE | prev_hash (32 B) | timestamp f64 LE
    | entry count u32 LE | per entry: server id u32 LE + entry bytes
    (epoch u32, batch u32, kind u8, then two f64 bounds or a 32-byte digest).
    """
    parts = [
        struct.pack("<QQ", height, term),
        prev_hash,
        struct.pack("<dI", timestamp, len(entries)),
    ]
    for server_id, entry in entries:
        parts.append(struct.pack("<I", server_id))
        parts.append(entry.canonical_bytes())
    return b"".join(parts)


def make_block(height: int, term: int, prev_hash: bytes, entries, timestamp: float) -> Block:
    entries = tuple(entries)
    payload = block_payload(height, term, prev_hash, entries, timestamp)
    return Block(
        height=height,
        term=term,
        prev_hash=prev_hash,
        entries=entries,
        timestamp=timestamp,
        hash=hashlib.sha256(payload).digest(),
    )


def genesis_block(term: int, timestamp: float) -> Block:
    return make_block(0, term, GENESIS_PREV_HASH, (), timestamp)


@dataclass
class ServerNode:
    """One consensus participant."""

    node_id: int
    role: Role = Role.FOLLOWER
    term: int = 0
    alive: bool = True
    ledger: list = field(default_factory=list)
    reward: float = 0.0
    head_hash: bytes = GENESIS_PREV_HASH  # tip of this node's chain view


def plurality_winner(votes) -> int:
    """Winner id of a vote multiset: most votes, ties to the lowest id."""
    votes = list(votes)
    if not votes:
        raise ValueError("no votes cast")
    tally: dict[int, int] = {}
    for v in votes:
        tally[v] = tally.get(v, 0) + 1
    best = max(tally.values())
    return min(i for i, c in tally.items() if c == best)


def elect_leader(nodes, rng: np.random.Generator) -> tuple[int, int]:
    """Single-round election among alive nodes; returns (leader id, new term).

    Every alive node becomes a candidate and votes for a uniformly random
    alive candidate (votes drawn in node-id order); the plurality winner
    leads, the rest follow and receive their random rewards. The term
    increments past the highest term any node has seen.
    """
    alive = sorted((n for n in nodes if n.alive), key=lambda n: n.node_id)
    if not alive:
        raise NetworkDeadError("no alive node remains to elect a leader")
    for node in alive:
        node.role = Role.CANDIDATE
    choices = [n.node_id for n in alive]
    votes = [choices[rng.integers(len(choices))] for _ in alive]
    winner = plurality_winner(votes)
    new_term = max(n.term for n in nodes) + 1
    for node in alive:
        node.term = new_term
        if node.node_id == winner:
            node.role = Role.LEADER
        else:
            node.role = Role.FOLLOWER
            node.reward = float(rng.random())
    return winner, new_term


def record_entry(node: ServerNode, entry: LedgerEntry) -> None:
    """Append an entry to an alive node's ledger."""
    if not node.alive:
        raise NodeParalyzedError(f"node {node.node_id} is paralyzed and records nothing")
    node.ledger.append(entry)


def commit_threshold(n_servers: int) -> int:
    """Minimum follower reports for a commit: at least half of N-1 followers."""
    return math.ceil((n_servers - 1) / 2)


def collect_and_commit(
    leader: ServerNode,
    messages,
    chain: list[Block],
    n_servers: int,
    timestamp: float,
    nodes=None,
) -> Block | None:
    """Gate one batch on follower reports; commit a block or abort.

    ``messages`` holds (follower id, entry) pairs that actually arrived.
    Fewer than ``ceil((N-1)/2)`` of them aborts the batch (returns None).
    Otherwise the block holds the leader's newest ledger entry followed by
    the reports sorted by server id, is appended to ``chain``, and — when
    ``nodes`` is given — is broadcast so every alive node's view moves to it.
    """
    if not leader.alive:
        raise NodeParalyzedError(f"leader {leader.node_id} is paralyzed")
    if leader.role is not Role.LEADER:
        raise NotLeaderError(f"node {leader.node_id} is {leader.role.value}, not the leader")
    messages = list(messages)
    if len(messages) < commit_threshold(n_servers):
        return None
    entries = []
    if leader.ledger:
        entries.append((leader.node_id, leader.ledger[-1]))
    entries.extend(sorted(messages, key=lambda pair: pair[0]))
    prev = chain[-1]
    block = make_block(prev.height + 1, leader.term, prev.hash, entries, timestamp)
    chain.append(block)
    if nodes is not None:
        for node in nodes:
            if node.alive:
                node.head_hash = block.hash
    else:
        leader.head_hash = block.hash
    return block


def inject_attack(nodes, strength: int, rng: np.random.Generator) -> set[int]:
    """Paralyze ``strength`` distinct alive nodes chosen uniformly.

    Implemented as a random permutation prefix, so with one generator state
    a stronger attack paralyzes a superset of a weaker one (paired-seed
    sweeps stay monotone). A paralyzed leader simply falls silent.
    """
    n_total = len(nodes)
    if not (0 <= strength < n_total / 2):
        raise ValueError(
            f"attack strength must satisfy 0 <= a < N/2, got a={strength} with N={n_total}"
        )
    alive_ids = sorted(n.node_id for n in nodes if n.alive)
    order = rng.permutation(len(alive_ids))
    hit = {alive_ids[i] for i in order[:strength]}
    for node in nodes:
        if node.node_id in hit:
            node.alive = False
            node.role = Role.FOLLOWER
    return hit


class Cluster:
    """Server fleet plus chain, term timer, and election bookkeeping.

    Advanced only by the simulator's event loop; ``rng`` drives elections
    and rewards. Control messages go out every ``control_interval``
    (defaults to a hundredth of the term) while the leader is healthy.
    """

    def __init__(
        self,
        n_servers: int,
        term_length: float,
        election_duration: float,
        rng: np.random.Generator,
        control_interval: float | None = None,
    ):
        if n_servers < 1:
            raise ValueError(f"need at least one server, got {n_servers}")
        self.nodes = [ServerNode(node_id=i) for i in range(n_servers)]
        self.term_length = term_length
        self.election_duration = election_duration
        self.control_interval = (
            term_length / 100.0 if control_interval is None else control_interval
        )
        self.rng = rng
        self.chain: list[Block] = []
        self.time = 0.0
        self.term_start = 0.0
        self.leader_id: int | None = None
        self.elections = 0
        self.election_log: list[tuple[int, int]] = []  # (term, leader id)
        self.control_messages = 0
        self._next_control = self.control_interval

    @property
    def n_servers(self) -> int:
        return len(self.nodes)

    @property
    def leader(self) -> ServerNode | None:
        if self.leader_id is None:
            return None
        return self.nodes[self.leader_id]

    def alive_nodes(self) -> list[ServerNode]:
        return [n for n in self.nodes if n.alive]

    def start(self) -> None:
        """Initial election plus genesis block."""
        self.elect()
        self.chain.append(genesis_block(self.leader.term, self.time))
        for node in self.alive_nodes():
            node.head_hash = self.chain[0].hash

    def elect(self) -> int:
        """Run one election, charging its duration to the simulated clock."""
        leader_id, term = elect_leader(self.nodes, self.rng)
        self.leader_id = leader_id
        self.time += self.election_duration
        self.term_start = self.time
        self._next_control = self.time + self.control_interval
        self.elections += 1
        self.election_log.append((term, leader_id))
        return leader_id


def tick(cluster: Cluster, dt: float) -> list[str]:
    """Advance the cluster clock and fire due protocol events.

    Returns the events in order: "control" for each routine leader
    broadcast that fell inside the window, then at most one "election"
    (leader silence or term expiry).
    """
    if dt < 0:
        raise ValueError(f"time advance must be non-negative, got {dt}")
    cluster.time += dt
    events: list[str] = []
    leader = cluster.leader
    if leader is not None and leader.alive:
        while cluster._next_control <= cluster.time:
            events.append("control")
            cluster.control_messages += 1
            cluster._next_control += cluster.control_interval
    if leader is None or not leader.alive:
        cluster.elect()
        events.append("election")
    elif cluster.time - cluster.term_start >= cluster.term_length:
        cluster.elect()
        events.append("election")
    return events


def verify_chain(chain) -> int | None:
    """Recompute every hash and link; None if valid, else first bad height."""
    for i, block in enumerate(chain):
        expected_prev = GENESIS_PREV_HASH if i == 0 else chain[i - 1].hash
        if block.height != i or block.prev_hash != expected_prev:
            return i
        payload = block_payload(
            block.height, block.term, block.prev_hash, block.entries, block.timestamp
        )
        if hashlib.sha256(payload).digest() != block.hash:
            return i
    return None


def chain_digest(chain) -> str:
    """Hex digest of the chain tip."""
    if not chain:
        raise ValueError("empty chain has no digest")
    return chain[-1].hash.hex()


def _entry_to_json(server_id: int, entry: LedgerEntry) -> dict:
    rec: dict = {"server": server_id, "epoch": entry.epoch, "batch": entry.batch}
    if entry.kind == "train":
        rec["izx"] = entry.izx_upper
        rec["izy"] = entry.izy_lower
    else:
        rec["digest"] = entry.digest.hex()
    return rec


def _entry_from_json(rec: dict) -> tuple[int, LedgerEntry]:
    if "digest" in rec:
        entry = LedgerEntry.test(rec["epoch"], rec["batch"], bytes.fromhex(rec["digest"]))
    else:
        entry = LedgerEntry.train(rec["epoch"], rec["batch"], rec["izx"], rec["izy"])
    return rec["server"], entry


def chain_to_jsonl(chain) -> str:
    """One JSON object per block, keys sorted, hex digests; trailing newline."""
    lines = []
    for block in chain:
        lines.append(
            json.dumps(
                {
                    "height": block.height,
                    "term": block.term,
                    "prev_hash": block.prev_hash.hex(),
                    "timestamp": block.timestamp,
                    "entries": [_entry_to_json(sid, e) for sid, e in block.entries],
                    "hash": block.hash.hex(),
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def chain_from_jsonl(text: str) -> list[Block]:
    """Parse an exported chain; hashes are taken verbatim (not recomputed),
    so :func:`verify_chain` still detects any file tampering."""
    chain = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        chain.append(
            Block(
                height=rec["height"],
                term=rec["term"],
                prev_hash=bytes.fromhex(rec["prev_hash"]),
                entries=tuple(_entry_from_json(e) for e in rec["entries"]),
                timestamp=rec["timestamp"],
                hash=bytes.fromhex(rec["hash"]),
            )
        )
    return chain


def save_chain(path, chain) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(chain_to_jsonl(chain))


def load_chain(path) -> list[Block]:
    with open(path, "r", encoding="utf-8") as fh:
        return chain_from_jsonl(fh.read())
