"""Opt-in instant finality: operator collateral, nonce-bound
collaborative spends, broadcast gossip with bounded delay, conflict
detection against the unordered offchain ledger, and collateral burning
through nonce-reuse key extraction.

The operator's signature on any fast-finality spend is forced to use a
nonce commitment fixed in the output script, so signing two conflicting
spends of one output reveals the operator's private key; that key
completes a committee-presigned burn of the collateral.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import arkcore, crypto
from .arkcore import Vtxo, classify_paths, p2pk, reset_tx
from .crypto import Fixed, PublicKey, SecretKey, Signature
from .ledger import Chain, OutPoint, Output, Params, SubmitError, Tx
from .operator_node import ArkPayment, Operator, Request, VtxoSpec
from .script import (
    UNSPENDABLE,
    AbsTimelock,
    And,
    CheckAggSig,
    CheckSig,
    NonceBound,
    Witness,
    taproot,
)


class FfError(Exception):
    pass


@dataclass(frozen=True)
class FfConfig:
    members: Tuple[str, ...]
    delta: int = 1              # gossip delivery bound (rounds)
    v: int = 0                  # total opted-in value
    c: int = 0                  # collateral, must exceed v
    committee_size: int = 3
    t_p: int = 10_000           # collateral maturity

    def validate(self) -> None:
        if self.c <= self.v:
            raise FfError("collateral must exceed the opted-in value")


COLLATERAL_RECLAIM_PATH = 0
COLLATERAL_BURN_PATH = 1


@dataclass
class Collateral:
    outpoint: OutPoint
    output: Output
    burn_tx: Tx
    committee_sig: Signature    # presigned by the n-of-n committee
    committee: crypto.AggregateKey


def setup_collateral(operator: Operator, committee_seeds: Sequence[bytes],
                     cfg: FfConfig, chain: Chain) -> Collateral:
    """Lock c onchain, reclaimable by the operator after t_p or burnable
    at once by the committee's presigned transaction completed with the
    operator's key.  Committee secrets are discarded on return."""
    cfg.validate()
    committee_keys = [crypto.keygen(s) for s in committee_seeds]
    committee = crypto.aggregate([pk for _, pk in committee_keys])
    lock = taproot(UNSPENDABLE, [
        And(CheckSig(operator.pk), AbsTimelock(cfg.t_p)),
        And(CheckAggSig(committee), CheckSig(operator.pk)),
    ])
    outpoint = chain.grant(cfg.c, lock)
    # burn: all value destroyed (sent to fees, nothing spendable remains)
    burn = Tx(ins=(outpoint,), outs=())
    committee_sig = crypto.cosign(burn.digest(), [sk for sk, _ in committee_keys],
                                  committee)
    del committee_keys  # the honest committee deletes its signing keys
    return Collateral(outpoint, Output(cfg.c, lock), burn, committee_sig, committee)


def burn_collateral(col: Collateral, operator_sk: SecretKey, chain: Chain,
                    by: str) -> Tx:
    """Complete the presigned burn with the (extracted) operator key."""
    op_sig = crypto.sign(operator_sk, col.burn_tx.digest())
    col.burn_tx.wits = [Witness(COLLATERAL_BURN_PATH,
                                (col.committee_sig, op_sig),
                                col.output.lock.paths)]
    chain.submit(col.burn_tx, by)
    return col.burn_tx


def _nonce_bound_commitment(lock) -> Optional[Tuple[int, int]]:
    for p in lock.paths:
        stack = [p]
        while stack:
            q = stack.pop()
            if isinstance(q, NonceBound):
                return q.r_star
            if isinstance(q, And):
                stack.extend(q.children)
    return None


@dataclass
class FfPayload:
    payment: ArkPayment
    sender: str
    recipient: str
    payload_id: str


@dataclass
class _PendingAccept:
    payload: FfPayload
    accept_round: int


class FfOperator:
    """Fast-finality signing front end for the operator: every spend of a
    nonce-bound output is signed with that output's fixed nonce."""

    def __init__(self, operator: Operator, byzantine: bool = False):
        self.operator = operator
        self.byzantine = byzantine
        self.nonces: Dict[bytes, int] = {}      # commitment hex -> scalar
        self.signed: Dict[Tuple[str, int], str] = {}  # outpoint -> ark txid

    def fresh_nonce(self, seed: bytes) -> Tuple[int, Tuple[int, int]]:
        r = crypto._tagged("arksim/ffnonce", seed) % crypto.Q or 1
        R = crypto.point_mul(crypto.G, r)
        self.nonces[crypto.compress(R)] = r
        return r, R

    def sign_nonce_bound(self, tx: Tx, r_star: Tuple[int, int],
                         allow_conflict: bool = False) -> Signature:
        r = self.nonces.get(crypto.compress(r_star))
        if r is None:
            raise FfError("unknown nonce commitment")
        key = (tx.ins[0].txid, tx.ins[0].index)
        prior = self.signed.get(key)
        if prior is not None and prior != tx.txid:
            if not (self.byzantine or allow_conflict):
                raise FfError("refusing to double-sign a nonce-bound spend")
        self.signed[key] = tx.txid
        return crypto.sign(self.operator.sk, tx.digest(), Fixed(r))


class FfCoordinator:
    """Gossip network and acceptance state machine for Protocol 1."""

    def __init__(self, cfg: FfConfig, chain: Chain, ff_operator: FfOperator,
                 wallets: Dict[str, object], collateral: Collateral,
                 edge_delay=None):
        cfg.validate()
        self.cfg = cfg
        self.chain = chain
        self.ffop = ff_operator
        self.wallets = wallets
        self.collateral = collateral
        # edge_delay(sender, receiver, payload_id) -> rounds in [1, delta]
        self.edge_delay = edge_delay or (lambda s, r, p: 1)
        self.inboxes: Dict[str, List[Tuple[int, FfPayload]]] = {m: [] for m in cfg.members}
        self.seen: Dict[str, List[FfPayload]] = {m: [] for m in cfg.members}
        self.pending: Dict[str, List[_PendingAccept]] = {m: [] for m in cfg.members}
        self.accepted: Dict[str, List[FfPayload]] = {m: [] for m in cfg.members}
        self.rejected: Dict[str, List[Tuple[FfPayload, str]]] = {m: [] for m in cfg.members}
        self.burned = False
        self.burn_txid: Optional[str] = None
        self.round = 0
        self.events: List[dict] = []

    # --- sending ---------------------------------------------------------

    def make_ff_payment(self, sender: str, vtxos: Sequence[Vtxo],
                        outputs: Sequence[VtxoSpec], paths: List[List[Tx]],
                        allow_conflict: bool = False) -> ArkPayment:
        """Build and operator-cosign a nonce-bound payment (resets first
        exist unsigned; the ark tx spends the reset outputs)."""
        op = self.ffop.operator
        params = op.params
        resets = []
        for v in vtxos:
            rst = reset_tx(v, op.pk, v.expiry, params.t_u)
            r_star = _nonce_bound_commitment(v.lock)
            if r_star is None:
                raise FfError("incorrect output script: no nonce commitment")
            owner_sk = self.wallets[v.owner].sk
            op_sig = self.ffop.sign_nonce_bound(rst, r_star)
            owner_sig = crypto.sign(owner_sk, rst.digest())
            collab_idx, _ = classify_paths(v.lock, op.pk, params.t_u)
            rst.wits = [Witness(collab_idx[0], (op_sig, owner_sig), v.lock.paths)]
            resets.append(rst)
        made = []
        for spec in outputs:
            if spec.r_star is None:
                _, R = self.ffop.fresh_nonce(
                    bytes.fromhex(resets[0].txid) + spec.owner_pk.encode())
                spec = VtxoSpec(spec.value, spec.owner, spec.owner_pk, R)
            made.append(spec)
        leaves = [Vtxo(s.value, arkcore.vtxo_lock(s.owner_pk, op.pk, params.t_u,
                                                  s.r_star), s.owner, s.owner_pk)
                  for s in made]
        ark = arkcore.ark_tx([(r.outpoint(0), r.outs[0].value) for r in resets],
                             leaves)
        for v, rst in zip(vtxos, resets):
            r_star = _nonce_bound_commitment(rst.outs[0].lock)
            op_sig = self.ffop.sign_nonce_bound(ark, r_star,
                                                allow_conflict=allow_conflict)
            owner_sig = crypto.sign(self.wallets[v.owner].sk, ark.digest())
            ark.wits.append(Witness(0, (op_sig, owner_sig), rst.outs[0].lock.paths))
        for leaf in leaves:
            leaf.expiry = min(v.expiry for v in vtxos)
        return ArkPayment(ark, resets, [list(p) for p in paths],
                          [v.expiry for v in vtxos], leaves)

    def ff_send(self, sender: str, recipient: str, payment: ArkPayment) -> str:
        if sender not in self.cfg.members or recipient not in self.cfg.members:
            raise FfError("parties must be opted in")
        payload = FfPayload(payment, sender, recipient, payment.ark.txid)
        self._broadcast(sender, payload)
        return payload.payload_id

    def _broadcast(self, origin: str, payload: FfPayload) -> None:
        for member in self.cfg.members:
            if member == origin:
                continue
            d = self.edge_delay(origin, member, payload.payload_id)
            d = max(1, min(d, self.cfg.delta))
            self.inboxes[member].append((self.round + d, payload))

    # --- receiving -------------------------------------------------------

    def _conflicts(self, a: ArkPayment, b: ArkPayment) -> bool:
        if a.ark.txid == b.ark.txid:
            return False
        return bool(set(a.ark.ins) & set(b.ark.ins))

    def _handle_arrival(self, member: str, payload: FfPayload) -> None:
        self.seen[member].append(payload)
        if payload.recipient != member:
            return
        payment = payload.payment
        if payload.sender not in self.cfg.members:
            self.rejected[member].append((payload, "sender not opted in"))
            return
        for rst in payment.resets:
            # the reset's output must be nonce-bound, or conflicting
            # spends would not force nonce reuse
            if _nonce_bound_commitment(rst.outs[0].lock) is None:
                self.rejected[member].append((payload, "incorrect output script"))
                return
        wallet = self.wallets[member]
        ok = wallet._check_witnesses(payment) if hasattr(wallet, "_check_witnesses") else True
        if not ok:
            self.rejected[member].append((payload, "invalid witnesses"))
            return
        # re-broadcast and wait 2 * delta before accepting
        self._broadcast(member, payload)
        self.pending[member].append(
            _PendingAccept(payload, self.round + 2 * self.cfg.delta))

    def _find_conflict(self, member: str, payload: FfPayload) -> Optional[FfPayload]:
        for other in self.seen[member]:
            if self._conflicts(payload.payment, other.payment):
                return other
        # chain conflict: any ark input spent by a different tx onchain
        for op in payload.payment.ark.ins:
            spender = self.chain.spent_by.get(op)
            if spender is not None and spender != payload.payment.ark.txid:
                other_tx = self.chain.records[spender].tx
                return FfPayload(
                    ArkPayment(other_tx, [], [], [], []), "chain", member,
                    other_tx.txid)
        return None

    def extract_and_burn(self, member: str, a: ArkPayment, b_tx: Tx) -> Optional[Tx]:
        """Recover the operator key from two nonce-bound signatures
        sharing R and submit the collateral burn."""
        op_pk = self.ffop.operator.pk
        sig_a = sig_b = None
        for wit in a.ark.wits:
            for s in wit.signatures:
                for wit_b in b_tx.wits:
                    for s2 in wit_b.signatures:
                        if s.R == s2.R and s.s != s2.s:
                            if crypto.verify(op_pk, a.ark.digest(), s) and \
                                    crypto.verify(op_pk, b_tx.digest(), s2):
                                sig_a, sig_b = s, s2
        if sig_a is None:
            return None
        sk = crypto.extract_secret(op_pk, a.ark.digest(), sig_a,
                                   b_tx.digest(), sig_b)
        assert sk.public() == op_pk
        if self.burned:
            return None
        burn = burn_collateral(self.collateral, sk, self.chain, member)
        self.burned = True
        self.burn_txid = burn.txid
        self.events.append({"event": "collateral_burned", "by": member,
                            "round": self.round})
        return burn

    def step(self) -> None:
        """Deliver due gossip, resolve waits, detect conflicts."""
        self.round += 1
        for member in self.cfg.members:
            due = [p for (r, p) in self.inboxes[member] if r <= self.round]
            self.inboxes[member] = [(r, p) for (r, p) in self.inboxes[member]
                                    if r > self.round]
            for payload in due:
                if all(payload.payload_id != s.payload_id
                       for s in self.seen[member]):
                    self._handle_arrival(member, payload)
        for member in self.cfg.members:
            for pend in list(self.pending[member]):
                conflict = self._find_conflict(member, pend.payload)
                if conflict is not None:
                    self.pending[member].remove(pend)
                    self.rejected[member].append((pend.payload, "conflict"))
                    self.extract_and_burn(member, pend.payload.payment,
                                          conflict.payment.ark)
                    continue
                if self.round >= pend.accept_round:
                    self.pending[member].remove(pend)
                    self.accepted[member].append(pend.payload)
                    self.events.append({"event": "ff_accept", "member": member,
                                        "payload": pend.payload.payload_id,
                                        "round": self.round})

    def monitor_step(self, member: str) -> List[Tx]:
        """React to onchain conflicts with accepted payments: extract and
        burn; outrace a previous owner's delayed reclaim by publishing
        the collaborative transcript."""
        reactions: List[Tx] = []
        for payload in self.accepted[member]:
            conflict = self._find_conflict(member, payload)
            if conflict is not None and conflict.sender == "chain":
                burn = self.extract_and_burn(member, payload.payment,
                                             conflict.payment.ark)
                if burn is not None:
                    reactions.append(burn)
            # previous owner unrolled the spent vtxo: publish the
            # collaborative reset + ark txs, which beat the t_u delay
            for rst in payload.payment.resets:
                src = rst.ins[0]
                if self.chain.unspent(src) and not self.chain.is_confirmed(rst.txid):
                    package = [rst, payload.payment.ark]
                    try:
                        self.chain.submit_package(
                            [t for t in package
                             if not self.chain.is_confirmed(t.txid)], member)
                        reactions.extend(package)
                    except SubmitError:
                        pass
        return reactions

    def ff_balance(self, member: str) -> int:
        h = self.chain.height
        total = 0
        seen_keys = set()
        swapped = getattr(self.wallets.get(member), "holdings", {})
        for payload in self.accepted[member]:
            for v in payload.payment.outputs:
                if v.owner != member or v.key() in seen_keys:
                    continue
                seen_keys.add(v.key())
                hld = swapped.get(v.key())
                if hld is not None and hld.kind == "batch":
                    continue  # moved to the ordinary balance after its swap
                if v.expiry - h > 2 * self.chain.params.k:
                    total += v.value
        return total
