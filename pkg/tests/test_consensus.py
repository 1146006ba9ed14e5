"""Consensus tests: elections, commit gating, attacks, chain verification."""

import dataclasses
import math

import numpy as np
import pytest

from bvib.consensus import (
    Block,
    Cluster,
    GENESIS_PREV_HASH,
    LedgerEntry,
    NetworkDeadError,
    NodeParalyzedError,
    NotLeaderError,
    Role,
    ServerNode,
    chain_digest,
    chain_from_jsonl,
    chain_to_jsonl,
    collect_and_commit,
    commit_threshold,
    elect_leader,
    genesis_block,
    inject_attack,
    make_block,
    plurality_winner,
    record_entry,
    tick,
    verify_chain,
)


def fresh_nodes(n):
    return [ServerNode(node_id=i) for i in range(n)]


class TestElection:
    def test_single_node_leads(self):
        nodes = fresh_nodes(1)
        leader, term = elect_leader(nodes, np.random.default_rng(0))
        assert leader == 0 and term == 1
        assert nodes[0].role is Role.LEADER

    def test_fixed_seed_is_deterministic(self):
        winners = set()
        for _ in range(5):
            nodes = fresh_nodes(10)
            leader, _ = elect_leader(nodes, np.random.default_rng(42))
            winners.add(leader)
        assert len(winners) == 1

    def test_tie_breaks_to_lowest_id(self):
        assert plurality_winner([1, 2, 1, 2]) == 1
        assert plurality_winner([5, 3, 3, 5, 7]) == 3
        assert plurality_winner([4]) == 4

    def test_exactly_one_leader_among_alive(self):
        nodes = fresh_nodes(10)
        nodes[3].alive = False
        leader, term = elect_leader(nodes, np.random.default_rng(7))
        leaders = [n.node_id for n in nodes if n.alive and n.role is Role.LEADER]
        assert leaders == [leader]
        assert all(n.term == term for n in nodes if n.alive)

    def test_dead_nodes_never_win(self):
        for seed in range(50):
            nodes = fresh_nodes(5)
            nodes[0].alive = False
            nodes[1].alive = False
            leader, _ = elect_leader(nodes, np.random.default_rng(seed))
            assert leader not in (0, 1)

    def test_network_dead(self):
        nodes = fresh_nodes(3)
        for n in nodes:
            n.alive = False
        with pytest.raises(NetworkDeadError):
            elect_leader(nodes, np.random.default_rng(0))

    def test_followers_receive_rewards(self):
        nodes = fresh_nodes(4)
        leader, _ = elect_leader(nodes, np.random.default_rng(3))
        for node in nodes:
            if node.node_id != leader:
                assert node.role is Role.FOLLOWER


class TestLedger:
    def test_record_appends_in_order(self):
        node = ServerNode(node_id=0)
        first = LedgerEntry.train(1, 0, 0.5, -1.0)
        second = LedgerEntry.train(1, 1, 0.4, -0.9)
        record_entry(node, first)
        record_entry(node, second)
        assert node.ledger == [first, second]

    def test_dead_node_rejected(self):
        node = ServerNode(node_id=0, alive=False)
        with pytest.raises(NodeParalyzedError):
            record_entry(node, LedgerEntry.train(0, 0, 0.1, -0.1))

    def test_entry_validation(self):
        with pytest.raises(ValueError):
            LedgerEntry(epoch=0, batch=0)  # neither bounds nor digest
        with pytest.raises(ValueError):
            LedgerEntry(epoch=0, batch=0, izx_upper=0.1, izy_lower=-0.1, digest=bytes(32))
        with pytest.raises(ValueError):
            LedgerEntry.test(0, 0, b"short")


class TestCommit:
    def _ready(self, n, seed=0):
        nodes = fresh_nodes(n)
        leader_id, _ = elect_leader(nodes, np.random.default_rng(seed))
        chain = [genesis_block(nodes[leader_id].term, 0.0)]
        leader = nodes[leader_id]
        record_entry(leader, LedgerEntry.train(1, 0, 0.5, -1.0))
        return nodes, leader, chain

    def _messages(self, nodes, leader, count):
        ids = [n.node_id for n in nodes if n.node_id != leader.node_id][:count]
        return [(i, LedgerEntry.train(1, 0, 0.1 * i, -0.1)) for i in ids]

    def test_threshold_boundaries(self):
        assert commit_threshold(10) == 5
        assert commit_threshold(3) == 1
        assert commit_threshold(1) == 0

    def test_all_followers_commit(self):
        nodes, leader, chain = self._ready(10)
        block = collect_and_commit(
            leader, self._messages(nodes, leader, 9), chain, 10, 1.0, nodes=nodes
        )
        assert block is not None
        assert block.height == 1
        assert len(block.entries) == 10  # leader plus nine reports

    def test_four_of_nine_aborts(self):
        nodes, leader, chain = self._ready(10)
        block = collect_and_commit(
            leader, self._messages(nodes, leader, 4), chain, 10, 1.0, nodes=nodes
        )
        assert block is None
        assert len(chain) == 1

    def test_exactly_five_of_nine_commits(self):
        nodes, leader, chain = self._ready(10)
        block = collect_and_commit(
            leader, self._messages(nodes, leader, 5), chain, 10, 1.0, nodes=nodes
        )
        assert block is not None

    def test_alive_views_move_to_new_block(self):
        nodes, leader, chain = self._ready(5)
        nodes[(leader.node_id + 1) % 5].alive = False
        block = collect_and_commit(
            leader, self._messages(nodes, leader, 3), chain, 5, 1.0, nodes=nodes
        )
        for node in nodes:
            if node.alive:
                assert node.head_hash == block.hash
            else:
                assert node.head_hash != block.hash

    def test_non_leader_rejected(self):
        nodes, leader, chain = self._ready(5)
        follower = next(n for n in nodes if n.role is Role.FOLLOWER)
        with pytest.raises(NotLeaderError):
            collect_and_commit(follower, [], chain, 5, 1.0)

    def test_paralyzed_leader_rejected(self):
        nodes, leader, chain = self._ready(5)
        leader.alive = False
        with pytest.raises(NodeParalyzedError):
            collect_and_commit(leader, self._messages(nodes, leader, 4), chain, 5, 1.0)


class TestAttack:
    def test_zero_strength_changes_nothing(self):
        nodes = fresh_nodes(10)
        assert inject_attack(nodes, 0, np.random.default_rng(0)) == set()
        assert all(n.alive for n in nodes)

    def test_uniform_leader_hit_rate(self):
        hits = 0
        trials = 4000
        for seed in range(trials):
            nodes = fresh_nodes(10)
            leader, _ = elect_leader(nodes, np.random.default_rng(seed))
            hit = inject_attack(nodes, 2, np.random.default_rng(10_000 + seed))
            hits += leader in hit
        p = 2 / 10
        sigma = math.sqrt(p * (1 - p) / trials)
        assert abs(hits / trials - p) < 3 * sigma

    def test_nested_under_shared_stream(self):
        weak = fresh_nodes(10)
        strong = fresh_nodes(10)
        weak_hit = inject_attack(weak, 2, np.random.default_rng(5))
        strong_hit = inject_attack(strong, 4, np.random.default_rng(5))
        assert weak_hit < strong_hit

    def test_overstrength_rejected(self):
        nodes = fresh_nodes(10)
        with pytest.raises(ValueError):
            inject_attack(nodes, 5, np.random.default_rng(0))


class TestTick:
    def _cluster(self, n=5, term=100.0, ele=0.5, seed=0):
        cluster = Cluster(
            n_servers=n, term_length=term, election_duration=ele,
            rng=np.random.default_rng(seed),
        )
        cluster.start()
        return cluster

    def test_healthy_leader_within_term(self):
        cluster = self._cluster()
        events = tick(cluster, 1.0)
        assert "election" not in events
        assert cluster.elections == 1  # only the initial one

    def test_term_expiry_fires_election(self):
        cluster = self._cluster(term=10.0)
        events = tick(cluster, 10.0)
        assert "election" in events
        assert cluster.elections == 2

    def test_paralyzed_leader_triggers_election(self):
        cluster = self._cluster()
        cluster.leader.alive = False
        events = tick(cluster, 0.0)
        assert "election" in events
        assert cluster.leader.alive
        assert cluster.elections == 2

    def test_election_charges_duration(self):
        cluster = self._cluster(term=10.0, ele=0.5)
        before = cluster.time
        tick(cluster, 10.0)
        assert cluster.time == pytest.approx(before + 10.0 + 0.5)

    def test_control_messages_flow(self):
        cluster = self._cluster(term=100.0)
        events = tick(cluster, 3.0)  # interval defaults to term/100 = 1.0
        assert events.count("control") == 3


class TestVerifyChain:
    def _chain(self, blocks=3):
        chain = [genesis_block(1, 0.0)]
        for i in range(1, blocks):
            entries = ((0, LedgerEntry.train(1, i, 0.1 * i, -0.2 * i)),)
            chain.append(make_block(i, 1, chain[-1].hash, entries, float(i)))
        return chain

    def test_genesis_only_valid(self):
        assert verify_chain([genesis_block(1, 0.0)]) is None

    def test_valid_chain(self):
        assert verify_chain(self._chain(5)) is None

    def test_single_entry_corruption_detected(self):
        chain = self._chain(4)
        target = chain[2]
        bad_entry = (0, LedgerEntry.train(1, 2, target.entries[0][1].izx_upper + 1e-9, -0.4))
        chain[2] = Block(
            height=target.height, term=target.term, prev_hash=target.prev_hash,
            entries=(bad_entry,), timestamp=target.timestamp, hash=target.hash,
        )
        assert verify_chain(chain) == 2

    def test_reorder_detected_at_lower_height(self):
        chain = self._chain(4)
        chain[1], chain[2] = chain[2], chain[1]
        assert verify_chain(chain) == 1

    def test_bit_flip_in_hash_detected(self):
        chain = self._chain(3)
        tampered = bytearray(chain[1].hash)
        tampered[0] ^= 0x01
        chain[1] = dataclasses.replace(chain[1], hash=bytes(tampered))
        assert verify_chain(chain) == 1


class TestChainExport:
    def _chain(self):
        chain = [genesis_block(1, 0.0)]
        chain.append(
            make_block(1, 1, chain[-1].hash, ((0, LedgerEntry.train(1, 0, 0.25, -1.5)),), 2.5)
        )
        chain.append(
            make_block(2, 1, chain[-1].hash, ((1, LedgerEntry.test(1, 0, bytes(range(32)))),), 3.5)
        )
        return chain

    def test_roundtrip_preserves_verification(self):
        chain = self._chain()
        restored = chain_from_jsonl(chain_to_jsonl(chain))
        assert verify_chain(restored) is None
        assert chain_digest(restored) == chain_digest(chain)
        assert restored[1].entries[0][1].izx_upper == 0.25
        assert restored[2].entries[0][1].digest == bytes(range(32))

    def test_tampered_export_detected(self):
        text = chain_to_jsonl(self._chain())
        tampered = text.replace("0.25", "0.26")
        assert tampered != text
        assert verify_chain(chain_from_jsonl(tampered)) == 1

    def test_genesis_prev_is_zero(self):
        assert genesis_block(1, 0.0).prev_hash == GENESIS_PREV_HASH == bytes(32)
