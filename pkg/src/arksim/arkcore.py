"""Construction of the commit-chain artifacts: VTXO locks, virtual
transaction trees (VTXTs), batch and connector outputs, and the
boarding / reset / ark / forfeit transaction templates.

A VTXO lock has an unspendable key path, at least one collaborative path
requiring the operator's signature, and at least one unilateral path
delayed by t_u.  A batch output commits to a VTXT whose internal nodes
reuse the batch lock shape (operator sweep after expiry + cosigner
unroll), so the recursive sweep works at every level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from . import crypto
from .crypto import AggregateKey, PublicKey, SecretKey
from .ledger import OutPoint, Output, Tx
from .script import (
    UNSPENDABLE,
    AbsTimelock,
    AlwaysTrue,
    And,
    CheckAggSig,
    CheckSig,
    LockScript,
    NonceBound,
    Predicate,
    RelTimelock,
    Witness,
    taproot,
)


class ArkError(Exception):
    pass


class NotALeaf(ArkError):
    pass


def p2pk(pk: PublicKey) -> LockScript:
    """Plain key-path output."""
    return taproot(pk, ())


def anchor_lock() -> LockScript:
    return taproot(UNSPENDABLE, [AlwaysTrue()])


@dataclass
class Vtxo:
    value: int
    lock: LockScript
    owner: str
    owner_pk: PublicKey
    expiry: int = 0                  # T_e of the batch it descends from
    outpoint: Optional[OutPoint] = None

    def key(self) -> Tuple[str, int]:
        assert self.outpoint is not None
        return (self.outpoint.txid, self.outpoint.index)


def vtxo_lock(owner: PublicKey, operator: PublicKey, t_u: int,
              r_star: Optional[Tuple[int, int]] = None) -> LockScript:
    """Single-signature VTXO lock: collaborative owner+operator path and
    a t_u-delayed unilateral owner path.  With r_star set, the
    collaborative path pins the operator's nonce commitment and checks
    the owner's signature separately (fast-finality variant)."""
    if t_u <= 0:
        raise ArkError("unilateral delay must be positive")
    if r_star is None:
        collab: Predicate = CheckAggSig(crypto.aggregate([owner, operator]))
    else:
        collab = And(NonceBound(operator, r_star), CheckSig(owner))
    unilateral = And(CheckSig(owner), RelTimelock(t_u))
    return taproot(UNSPENDABLE, [collab, unilateral])


def _requires_key(p: Predicate, pk: PublicKey) -> bool:
    if isinstance(p, CheckSig) or isinstance(p, NonceBound):
        return p.pk == pk
    if isinstance(p, CheckAggSig):
        return pk in p.key.members
    if isinstance(p, And):
        return any(_requires_key(c, pk) for c in p.children)
    return False


def _min_rel_delay(p: Predicate) -> int:
    if isinstance(p, RelTimelock):
        return p.blocks
    if isinstance(p, And):
        return max((_min_rel_delay(c) for c in p.children), default=0)
    return 0


def classify_paths(lock: LockScript, operator: PublicKey, t_u: int
                   ) -> Tuple[List[int], List[int]]:
    """Split a lock's paths into collaborative (operator-required) and
    valid unilateral (operator-free, delayed >= t_u) path indices;
    raises unless the lock satisfies the VTXO definition."""
    if not isinstance(lock.internal_key, type(UNSPENDABLE)):
        raise ArkError("VTXO key path must be unspendable")
    collab, unilateral = [], []
    for i, p in enumerate(lock.paths):
        if _requires_key(p, operator):
            collab.append(i)
        elif _min_rel_delay(p) >= t_u:
            unilateral.append(i)
        else:
            raise ArkError(f"path {i} neither requires the operator nor waits t_u")
    if not collab:
        raise ArkError("no collaborative path")
    if not unilateral:
        raise ArkError("no unilateral path")
    return collab, unilateral


def collab_aggregate(lock: LockScript) -> Tuple[int, AggregateKey]:
    """Index and aggregate key of the collaborative CheckAggSig path,
    whichever operator it names."""
    for i, p in enumerate(lock.paths):
        if isinstance(p, CheckAggSig):
            return i, p.key
    raise ArkError("no aggregate collaborative path")


def batch_lock(operator: PublicKey, cosigners: AggregateKey, expiry: int) -> LockScript:
    """Batch-shaped output: operator sweep after expiry, cosigner unroll."""
    sweep = And(CheckSig(operator), AbsTimelock(expiry))
    unroll = CheckAggSig(cosigners)
    return taproot(UNSPENDABLE, [sweep, unroll])


BATCH_SWEEP_PATH = 0
BATCH_UNROLL_PATH = 1


def sweep_path_height(lock: LockScript) -> Optional[int]:
    """Expiry height of a batch-shaped lock, if it has one."""
    for p in lock.paths:
        if isinstance(p, And):
            locks = [c for c in p.children if isinstance(c, AbsTimelock)]
            sigs = [c for c in p.children if isinstance(c, CheckSig)]
            if locks and sigs:
                return locks[0].height
    return None


@dataclass
class LeafRef:
    txid: str
    index: int
    vtxo: Vtxo


@dataclass
class Vtxt:
    funding: OutPoint
    txs: Dict[str, Tx] = field(default_factory=dict)
    parent: Dict[str, Optional[str]] = field(default_factory=dict)
    order: List[str] = field(default_factory=list)      # root first, topological
    input_locks: Dict[str, LockScript] = field(default_factory=dict)
    input_values: Dict[str, int] = field(default_factory=dict)
    root: str = ""
    leaves: List[LeafRef] = field(default_factory=list)

    def path_to(self, leaf_txid: str) -> List[Tx]:
        chain: List[str] = []
        cur: Optional[str] = leaf_txid
        while cur is not None:
            chain.append(cur)
            cur = self.parent[cur]
        return [self.txs[t] for t in reversed(chain)]

    def depth(self) -> int:
        return max(len(self.path_to(leaf.txid)) for leaf in self.leaves)


SignerTree = Dict[str, Tuple[PublicKey, ...]]


def check_vtxt(vtxt: Vtxt) -> None:
    """Structural validity: one root, unique parents, single-input nodes,
    and the edge condition (a child's input is an output of its parent)."""
    roots = [t for t, p in vtxt.parent.items() if p is None]
    if roots != [vtxt.root] :
        raise ArkError("tree must have exactly one root")
    for txid, tx in vtxt.txs.items():
        if len(tx.ins) != 1:
            raise ArkError("tree nodes are single-input transactions")
        parent = vtxt.parent[txid]
        if parent is None:
            if tx.ins[0] != vtxt.funding:
                raise ArkError("root must spend the funding outpoint")
        else:
            if tx.ins[0].txid != parent:
                raise ArkError("edge condition violated")


def _chunks(items: List, arity: int) -> List[List]:
    n = len(items)
    width = math.ceil(n / arity)
    return [items[i:i + width] for i in range(0, n, width)]


def build_vtxt(funding: OutPoint, leaves: Sequence[Vtxo], operator: PublicKey,
               expiry: int, arity: int = 2) -> Tuple[Vtxt, SignerTree]:
    """Balanced VTXT over the funding outpoint.  Internal node outputs
    are batch-shaped over the cosigners of their subtree (path-only
    cosigning); each leaf transaction carries its VTXO plus a zero-value
    fee anchor."""
    if not leaves:
        raise ArkError("empty leaf set")
    if arity < 2:
        raise ArkError("arity must be at least 2")
    vtxt = Vtxt(funding=funding)
    signers: SignerTree = {}

    def subtree_members(group: Sequence[Vtxo]) -> Tuple[PublicKey, ...]:
        pks = {operator.encode(): operator}
        for v in group:
            pks[v.owner_pk.encode()] = v.owner_pk
        return tuple(pks[k] for k in sorted(pks))

    def build(outpoint: OutPoint, in_value: int, in_lock: LockScript,
              group: List[Vtxo], parent_txid: Optional[str]) -> None:
        if len(group) == 1:
            v = group[0]
            tx = Tx(ins=(outpoint,), outs=(Output(v.value, v.lock), Output(0, anchor_lock())))
            v.outpoint = tx.outpoint(0)
            v.expiry = expiry
            vtxt.txs[tx.txid] = tx
            vtxt.parent[tx.txid] = parent_txid
            vtxt.order.append(tx.txid)
            vtxt.input_locks[tx.txid] = in_lock
            vtxt.input_values[tx.txid] = in_value
            vtxt.leaves.append(LeafRef(tx.txid, 0, v))
            signers[tx.txid] = subtree_members(group)
            return
        groups = _chunks(group, arity)
        outs = [Output(sum(v.value for v in g),
                       batch_lock(operator, crypto.aggregate(subtree_members(g)), expiry))
                for g in groups]
        tx = Tx(ins=(outpoint,), outs=tuple(outs) + (Output(0, anchor_lock()),))
        vtxt.txs[tx.txid] = tx
        vtxt.parent[tx.txid] = parent_txid
        vtxt.order.append(tx.txid)
        vtxt.input_locks[tx.txid] = in_lock
        vtxt.input_values[tx.txid] = in_value
        signers[tx.txid] = subtree_members(group)
        for i, g in enumerate(groups):
            build(tx.outpoint(i), tx.outs[i].value, tx.outs[i].lock, g, tx.txid)

    total = sum(v.value for v in leaves)
    root_lock = batch_lock(operator, crypto.aggregate(subtree_members(list(leaves))), expiry)
    build(funding, total, root_lock, list(leaves), None)
    vtxt.root = vtxt.order[0]
    check_vtxt(vtxt)
    return vtxt, signers


def path(vtxt: Vtxt, vtxo: Vtxo) -> List[Tx]:
    """Root-to-leaf transaction sequence materializing the VTXO."""
    for leaf in vtxt.leaves:
        if vtxo.outpoint is not None and leaf.txid == vtxo.outpoint.txid:
            return vtxt.path_to(leaf.txid)
        if leaf.vtxo is vtxo:
            return vtxt.path_to(leaf.txid)
    raise NotALeaf("vtxo is not a leaf of this tree")


@dataclass
class BatchOutput:
    value: int
    expiry: int
    lock: LockScript
    vtxt: Vtxt
    signers: SignerTree


@dataclass
class ConnectorOutput:
    value: int
    lock: LockScript
    vtxt: Optional[Vtxt]                     # None when the output itself is the anchor
    anchors: List[OutPoint]


def build_connector(funding: OutPoint, anchor_count: int, operator: PublicKey,
                    epsilon: int, arity: int = 2) -> ConnectorOutput:
    """Operator-only tree fanning the funding value out into
    anchor_count dust anchors of value epsilon each."""
    if anchor_count < 1:
        raise ArkError("need at least one anchor")
    op_lock = p2pk(operator)
    if anchor_count == 1:
        return ConnectorOutput(epsilon, op_lock, None, [funding])
    vtxt = Vtxt(funding=funding)
    anchors: List[OutPoint] = []

    def build(outpoint: OutPoint, count: int, in_lock: LockScript,
              parent_txid: Optional[str]) -> None:
        groups = _chunks(list(range(count)), arity)
        outs = []
        for g in groups:
            if len(g) == 1:
                outs.append(Output(epsilon, op_lock))
            else:
                outs.append(Output(len(g) * epsilon, op_lock))
        tx = Tx(ins=(outpoint,), outs=tuple(outs))
        vtxt.txs[tx.txid] = tx
        vtxt.parent[tx.txid] = parent_txid
        vtxt.order.append(tx.txid)
        vtxt.input_locks[tx.txid] = in_lock
        vtxt.input_values[tx.txid] = count * epsilon
        for i, g in enumerate(groups):
            if len(g) == 1:
                anchors.append(tx.outpoint(i))
                vtxt.leaves.append(LeafRef(tx.txid, i, None))  # type: ignore[arg-type]
            else:
                build(tx.outpoint(i), len(g), tx.outs[i].lock, tx.txid)

    build(funding, anchor_count, op_lock, None)
    vtxt.root = vtxt.order[0]
    return ConnectorOutput(anchor_count * epsilon, op_lock, vtxt, anchors)


def boarding_lock(owner: PublicKey, operator: PublicKey, t_b: int) -> LockScript:
    return taproot(UNSPENDABLE, [
        CheckAggSig(crypto.aggregate([owner, operator])),
        And(CheckSig(owner), RelTimelock(t_b)),
    ])


BOARDING_COOP_PATH = 0
BOARDING_EXIT_PATH = 1


def boarding_tx(funds: Sequence[Tuple[OutPoint, int]], owner: PublicKey,
                operator: PublicKey, t_b: int, vtxo_total: int) -> Tx:
    """Move user funds into a boarding output the operator can later
    claim cooperatively (or the owner reclaims after t_b)."""
    total = sum(v for _, v in funds)
    if total < vtxo_total:
        raise ArkError("funds do not cover the requested VTXOs")
    lock = boarding_lock(owner, operator, t_b)
    return Tx(ins=tuple(op for op, _ in funds), outs=(Output(total, lock),))


def reset_lock(vtxo: Vtxo, operator: PublicKey, expiry: int, t_u: int) -> LockScript:
    collab_idx, _ = classify_paths(vtxo.lock, operator, t_u)
    collab_paths = tuple(vtxo.lock.paths[i] for i in collab_idx)
    sweep = And(CheckSig(operator), AbsTimelock(expiry))
    return taproot(UNSPENDABLE, collab_paths + (sweep,))


def reset_tx(vtxo: Vtxo, operator: PublicKey, expiry: int, t_u: int) -> Tx:
    """Intermediate transaction that re-locks a spent VTXO so the
    operator can sweep it at the originating batch's expiry."""
    assert vtxo.outpoint is not None
    lock = reset_lock(vtxo, operator, expiry, t_u)
    return Tx(ins=(vtxo.outpoint,), outs=(Output(vtxo.value, lock),))


def ark_tx(reset_outs: Sequence[Tuple[OutPoint, int]], outputs: Sequence[Vtxo]) -> Tx:
    """Spend reset outputs into fresh VTXOs."""
    in_total = sum(v for _, v in reset_outs)
    out_total = sum(v.value for v in outputs)
    if out_total > in_total:
        raise ArkError("outputs exceed inputs")
    tx = Tx(ins=tuple(op for op, _ in reset_outs),
            outs=tuple(Output(v.value, v.lock) for v in outputs))
    for i, v in enumerate(outputs):
        v.outpoint = tx.outpoint(i)
    return tx


def forfeit_tx(vtxo: Vtxo, anchor: OutPoint, operator: PublicKey, epsilon: int) -> Tx:
    """Give a VTXO (plus one connector anchor) to the operator; the
    SIGHASH_ALL digest binds it to the commitment holding the anchor."""
    assert vtxo.outpoint is not None
    return Tx(ins=(vtxo.outpoint, anchor),
              outs=(Output(vtxo.value + epsilon, p2pk(operator)),))
