"""Raft-lite consensus and the hash-linked ledger chain.

Elects a leader among ten servers, commits a few blocks of ledger entries,
paralyzes some nodes to show the re-election and quorum behavior, then
demonstrates that any tampering with the exported chain is caught.
"""

import numpy as np

from bvib.consensus import (
    Cluster,
    LedgerEntry,
    chain_digest,
    chain_from_jsonl,
    chain_to_jsonl,
    collect_and_commit,
    commit_threshold,
    inject_attack,
    record_entry,
    tick,
    verify_chain,
)

rng = np.random.default_rng(3)
cluster = Cluster(n_servers=10, term_length=600.0, election_duration=0.01, rng=rng)
cluster.start()
print(f"initial election: server {cluster.leader_id} leads term {cluster.leader.term}")
print(f"commit quorum: {commit_threshold(10)} of 9 followers\n")

# --- a few committed batches ---------------------------------------------------
for batch in range(3):
    for node in cluster.alive_nodes():
        record_entry(node, LedgerEntry.train(epoch=1, batch=batch,
                                             izx_upper=30.0 - batch, izy_lower=-2.0 + batch))
    leader = cluster.leader
    reports = [
        (node.node_id, node.ledger[-1])
        for node in cluster.alive_nodes()
        if node.node_id != leader.node_id
    ]
    cluster.time += 5.0
    block = collect_and_commit(leader, reports, cluster.chain, 10, cluster.time, nodes=cluster.nodes)
    print(f"batch {batch}: committed block {block.height} with {len(block.entries)} entries")

# --- paralyze nodes, including (maybe) the leader --------------------------------
hit = inject_attack(cluster.nodes, 4, np.random.default_rng(11))
print(f"\nattack paralyzes servers {sorted(hit)}")
events = tick(cluster, 0.0)
if "election" in events:
    print(f"leader was hit; server {cluster.leader_id} now leads term {cluster.leader.term}")
else:
    print(f"leader {cluster.leader_id} survived; no re-election needed")

for node in cluster.alive_nodes():
    record_entry(node, LedgerEntry.train(epoch=1, batch=3, izx_upper=26.5, izy_lower=-0.8))
leader = cluster.leader
reports = [
    (n.node_id, n.ledger[-1]) for n in cluster.alive_nodes() if n.node_id != leader.node_id
]
cluster.time += 5.0
block = collect_and_commit(leader, reports, cluster.chain, 10, cluster.time, nodes=cluster.nodes)
print(f"with {len(reports)} alive followers the batch still commits: height {block.height}")

# --- audit the exported chain ------------------------------------------------------
text = chain_to_jsonl(cluster.chain)
print(f"\nchain of {len(cluster.chain)} blocks, digest {chain_digest(cluster.chain)[:16]}...")
print("verification:", "valid" if verify_chain(cluster.chain) is None else "INVALID")

tampered = text.replace("26.5", "26.500001", 1)
bad_height = verify_chain(chain_from_jsonl(tampered))
print(f"after nudging one recorded bound by 1e-6: first bad height = {bad_height}")
