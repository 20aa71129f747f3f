"""Operator state machine: request intake and verification, commitment
assembly, signing orchestration, list bookkeeping, sweeping, and the
per-round watch loop.

All effects flow through the book's request and VTXO lists; the signing
ceremony releases nothing until every required signature (including all
forfeits) is held, and the onchain watcher answers any unrolled spent
VTXO with its stored reset or forfeit transaction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from . import arkcore, crypto
from .arkcore import (
    BATCH_SWEEP_PATH,
    BATCH_UNROLL_PATH,
    BOARDING_COOP_PATH,
    BatchOutput,
    ConnectorOutput,
    SignerTree,
    Vtxo,
    Vtxt,
    anchor_lock,
    batch_lock,
    boarding_lock,
    build_connector,
    build_vtxt,
    classify_paths,
    collab_aggregate,
    forfeit_tx,
    p2pk,
    reset_tx,
    sweep_path_height,
)
from .crypto import PublicKey, SecretKey, SessionAborted
from .ledger import Chain, OutPoint, Output, Params, SubmitError, Tx
from .script import KEY_PATH, UNSPENDABLE, LockScript, Witness, taproot


class Reject(Exception):
    pass


@dataclass
class VtxoSpec:
    """Requested output: value to a fresh single-signature VTXO."""
    value: int
    owner: str
    owner_pk: PublicKey
    r_star: Optional[Tuple[int, int]] = None


@dataclass
class Request:
    kind: str                      # boarding | batch-swap | exit | ark
    party: str
    cosigners: Tuple[PublicKey, ...] = ()
    boarding_outpoint: Optional[OutPoint] = None
    boarding_output: Optional[Output] = None
    inputs: Tuple[Vtxo, ...] = ()
    outputs: Tuple[VtxoSpec, ...] = ()
    exit_outputs: Tuple[Tuple[int, LockScript], ...] = ()
    resets: Tuple[Tx, ...] = ()
    input_expiries: Tuple[int, ...] = ()


@dataclass
class BatchingPolicy:
    min_requests: int = 1
    max_rounds: int = 1
    arity: int = 2
    fee: int = 0

    def triggers(self, pending: int, rounds_since_last: int) -> bool:
        if pending == 0:
            return False
        return pending >= self.min_requests or rounds_since_last >= self.max_rounds


@dataclass
class OperatorBook:
    toBoard: List[Request] = field(default_factory=list)
    toBatchSwap: List[Request] = field(default_factory=list)
    toExit: List[Request] = field(default_factory=list)
    unconfirmed: List[Vtxo] = field(default_factory=list)
    confirmedVTXO: Dict[Tuple[str, int], Vtxo] = field(default_factory=dict)
    confirmedBatches: List["BatchRecord"] = field(default_factory=list)
    expired: List["BatchRecord"] = field(default_factory=list)
    unconfirmedSpent: List[Tuple[Vtxo, Tx]] = field(default_factory=list)
    spent: List[Tuple[Vtxo, Tx]] = field(default_factory=list)
    replaced: List[Tx] = field(default_factory=list)
    preSpent: Set[Tuple[str, int]] = field(default_factory=set)
    preConfirmed: Dict[Tuple[str, int], Vtxo] = field(default_factory=dict)
    unconfirmedBoardings: List[Request] = field(default_factory=list)
    unconfirmedBatchSwaps: List[Request] = field(default_factory=list)
    unconfirmedExits: List[Request] = field(default_factory=list)
    confirmedBoardings: List[Request] = field(default_factory=list)
    confirmedBatchSwaps: List[Request] = field(default_factory=list)
    confirmedExits: List[Request] = field(default_factory=list)


@dataclass
class BatchRecord:
    outpoint: OutPoint
    batch: BatchOutput
    commitment_txid: str


@dataclass
class Bundle:
    """Everything the parties inspect and sign for one commitment."""
    commitment: Tx
    batch: Optional[BatchOutput]
    connector: Optional[ConnectorOutput]
    gamma: Dict[Tuple[str, int], OutPoint]          # forfeited vtxo -> anchor
    boardings: List[Request]
    swaps: List[Request]
    exits: List[Request]
    funding_ins: List[Tuple[OutPoint, Output]]      # operator liquidity inputs
    boarding_ins: List[Tuple[OutPoint, Output]]
    leaf_by_request: Dict[int, List[Vtxo]]          # request position -> leaf vtxos
    forfeits: Dict[Tuple[str, int], Tx] = field(default_factory=dict)
    submit_height: Optional[int] = None
    account: Dict[str, int] = field(default_factory=dict)  # Lemma-4 style flows


@dataclass
class ArkPayment:
    """Signed payload handed to a payee: the ark tx, its reset txs, and
    per-input unroll paths with their batch expiries."""
    ark: Tx
    resets: List[Tx]
    paths: List[List[Tx]]
    input_expiries: List[int]
    outputs: List[Vtxo]


class Operator:
    def __init__(self, name: str, sk: SecretKey, chain: Chain, params: Params,
                 policy: Optional[BatchingPolicy] = None):
        self.name = name
        self.sk = sk
        self.pk = sk.public()
        self.chain = chain
        self.params = params
        self.policy = policy or BatchingPolicy(arity=params.arity)
        self.book = OperatorBook()
        self.liquidity: List[Tuple[OutPoint, Output]] = []
        self.pending_bundles: List[Bundle] = []
        self.signing_log: List[str] = []
        self.cosigned_spends: Dict[Tuple[str, int], str] = {}
        self.reset_sweeps: List[Tuple[OutPoint, int, int]] = []  # (outpoint, expiry, value)
        self.connector_published: Set[str] = set()
        self.rounds_since_commit = 0
        self.use_resets = True
        self.events: List[dict] = []
        self.collected_fees = 0
        chain.register(name)

    # --- funding ---------------------------------------------------------

    def fund(self, value: int) -> OutPoint:
        op = self.chain.grant(value, p2pk(self.pk))
        self.liquidity.append((op, Output(value, p2pk(self.pk))))
        return op

    def _spendable_liquidity(self) -> List[Tuple[OutPoint, Output]]:
        return [(op, out) for op, out in self.liquidity if self.chain.unspent(op)]

    def onchain_balance(self) -> int:
        total = 0
        for op, entry in self.chain.utxos.items():
            lock = entry.output.lock
            if lock == p2pk(self.pk):
                total += entry.output.value
        return total

    # --- instrumented cosigning -----------------------------------------

    def _cosign(self, tx: Tx, members: Sequence[PublicKey],
                secrets: Dict[str, SecretKey], label: str,
                nonce: crypto.Fresh | crypto.Fixed = crypto.Fresh()) -> crypto.Signature:
        # honest single-spend discipline: never co-sign two different
        # transactions spending the same input
        for op in tx.ins:
            key = (op.txid, op.index)
            prior = self.cosigned_spends.get(key)
            if prior is not None and prior != tx.txid and label not in ("forfeit", "boarding"):
                raise Reject(f"operator already co-signed a spend of {key}")
        sks = []
        for m in members:
            sk = secrets.get(m.hex())
            if sk is None:
                raise SessionAborted(f"{label}: signer {m.hex()[:8]} absent")
            sks.append(sk)
        sig = crypto.cosign(tx.digest(), sks, crypto.aggregate(members), nonce)
        self.signing_log.append(f"{label}:{tx.txid[:8]}")
        for op in tx.ins:
            self.cosigned_spends[(op.txid, op.index)] = tx.txid
        return sig

    # --- request intake --------------------------------------------------

    def verify_boarding(self, r: Request) -> None:
        assert r.kind == "boarding" and r.boarding_outpoint is not None
        key = (r.boarding_outpoint.txid, r.boarding_outpoint.index)
        view = self.chain.view(self.name, depth=self.params.k)
        if r.boarding_outpoint not in view["utxos"]:
            raise Reject("boarding output not confirmed in the stable view")
        if key in self.book.preSpent:
            raise Reject("boarding output already pending")
        out = view["utxos"][r.boarding_outpoint]
        lock = out.lock
        expected = boarding_lock(r.outputs[0].owner_pk, self.pk, self.params.t_b) \
            if r.outputs else None
        try:
            classify_paths(lock, self.pk, self.params.t_b)
        except arkcore.ArkError as e:
            raise Reject(f"boarding lock unsafe: {e}")
        if out.value < sum(s.value for s in r.outputs) + self.policy.fee:
            raise Reject("funds do not cover the requested VTXOs")
        r.boarding_output = out
        self.book.toBoard.append(r)
        self.book.preSpent.add(key)

    def _verify_vtxo_inputs(self, r: Request) -> None:
        for v in r.inputs:
            assert v.outpoint is not None
            key = v.key()
            if key not in self.book.confirmedVTXO and key not in self.book.preConfirmed:
                raise Reject(f"UnknownVtxo {key}")
            if key in self.book.preSpent:
                raise Reject(f"AlreadyPending {key}")

    def verify_batch_swap(self, r: Request) -> None:
        assert r.kind == "batch-swap"
        self._verify_vtxo_inputs(r)
        if sum(s.value for s in r.outputs) + self.policy.fee > sum(v.value for v in r.inputs):
            raise Reject("ValueExceeded")
        self.book.toBatchSwap.append(r)
        for v in r.inputs:
            self.book.preSpent.add(v.key())

    def verify_exit(self, r: Request) -> None:
        assert r.kind == "exit"
        self._verify_vtxo_inputs(r)
        if sum(v for v, _ in r.exit_outputs) + self.policy.fee > sum(v.value for v in r.inputs):
            raise Reject("ValueExceeded")
        self.book.toExit.append(r)
        for v in r.inputs:
            self.book.preSpent.add(v.key())

    # --- ark transactions ------------------------------------------------

    def verify_ark_request(self, r: Request, secrets: Dict[str, SecretKey]
                           ) -> ArkPayment:
        """Check and co-sign an offchain payment: the ark tx is signed
        first, the reset txs last, so the payer never holds a usable
        reset without the payment being complete."""
        assert r.kind == "ark"
        for v in r.inputs:
            key = v.key()
            if key not in self.book.confirmedVTXO and key not in self.book.preConfirmed:
                raise Reject(f"DoubleSpend/unknown input {key}")
            if key in self.book.preSpent:
                raise Reject(f"DoubleSpend {key}")
        if sum(s.value for s in r.outputs) > sum(v.value for v in r.inputs):
            raise Reject("ValueExceeded")
        all_secrets = dict(secrets)
        all_secrets[self.pk.hex()] = self.sk
        outputs = [self._make_leaf(s) for s in r.outputs]
        for out in outputs:
            out.expiry = min(r.input_expiries)  # inherits the earliest input expiry
        if self.use_resets:
            if len(r.resets) != len(r.inputs):
                raise Reject("MissingReset")
            resets = list(r.resets)
            for v, rst, exp in zip(r.inputs, resets, r.input_expiries):
                if exp != v.expiry:
                    raise Reject("MissingReset: wrong expiry")
                expected = reset_tx(v, self.pk, v.expiry, self.params.t_u)
                if rst.txid != expected.txid:
                    raise Reject("MissingReset: reset does not re-lock the input")
            ark = arkcore.ark_tx(
                [(rst.outpoint(0), rst.outs[0].value) for rst in resets], outputs)
            # sign the ark tx first ...
            for v, rst in zip(r.inputs, resets):
                members = crypto.aggregate([v.owner_pk, self.pk]).members
                sig = self._cosign(ark, members, all_secrets, "ark")
                ark.wits.append(Witness(0, (sig,), rst.outs[0].lock.paths))
            # ... the reset txs last
            for v, rst in zip(r.inputs, resets):
                collab_idx, _ = classify_paths(v.lock, self.pk, self.params.t_u)
                members = crypto.aggregate([v.owner_pk, self.pk]).members
                sig = self._cosign(rst, members, all_secrets, "reset")
                rst.wits = [Witness(collab_idx[0], (sig,), v.lock.paths)]
        else:
            # legacy shape without reset transactions: the ark tx spends
            # the input VTXOs directly (the hostage-attack configuration)
            resets = []
            ark = arkcore.ark_tx(
                [(v.outpoint, v.value) for v in r.inputs], outputs)
            for v in r.inputs:
                collab_idx, _ = classify_paths(v.lock, self.pk, self.params.t_u)
                members = crypto.aggregate([v.owner_pk, self.pk]).members
                sig = self._cosign(ark, members, all_secrets, "ark")
                ark.wits.append(Witness(collab_idx[0], (sig,), v.lock.paths))
        for v, rst in zip(r.inputs, resets or [None] * len(r.inputs)):
            key = v.key()
            self.book.confirmedVTXO.pop(key, None)
            self.book.preConfirmed.pop(key, None)
            self.book.preSpent.add(key)
            if rst is not None:
                self.book.spent.append((v, rst))
                self.reset_sweeps.append((rst.outpoint(0), v.expiry, rst.outs[0].value))
        for out in outputs:
            self.book.preConfirmed[out.key()] = out
        return ArkPayment(ark, resets, [], list(r.input_expiries), outputs)

    # --- commitment assembly --------------------------------------------

    def _make_leaf(self, spec: VtxoSpec) -> Vtxo:
        lock = arkcore.vtxo_lock(spec.owner_pk, self.pk, self.params.t_u, spec.r_star)
        return Vtxo(spec.value, lock, spec.owner, spec.owner_pk)

    def assemble_commitment(self) -> Optional[Bundle]:
        boardings = list(self.book.toBoard)
        swaps = list(self.book.toBatchSwap)
        exits = list(self.book.toExit)
        if not (boardings or swaps or exits):
            return None
        h = self.chain.height
        expiry = h + 2 * self.params.k + self.params.t_e
        fee = self.policy.fee

        leaves: List[Vtxo] = []
        leaf_by_request: Dict[int, List[Vtxo]] = {}
        for i, r in enumerate(boardings + swaps):
            made = [self._make_leaf(s) for s in r.outputs]
            leaf_by_request[i] = made
            leaves.extend(made)
        forfeited: List[Vtxo] = [v for r in swaps for v in r.inputs]
        exit_outs = [(v, lock) for r in exits for (v, lock) in r.exit_outputs]

        batch_value = sum(v.value for v in leaves)
        connector_value = len(forfeited) * self.params.epsilon
        exit_value = sum(v for v, _ in exit_outs)
        boarding_ins = [(r.boarding_outpoint, r.boarding_output) for r in boardings]
        boarding_value = sum(o.value for _, o in boarding_ins)
        request_fees = fee * (len(boardings) + len(swaps) + len(exits))

        # operator funding: batches + connectors + exits must be covered by
        # liquidity plus boarding inputs (swapped value returns via forfeits)
        need = batch_value + connector_value + exit_value - boarding_value
        funding: List[Tuple[OutPoint, Output]] = []
        have = 0
        for op, out in self._spendable_liquidity():
            if have >= max(need, 0) + 1:
                break
            funding.append((op, out))
            have += out.value
        if have + boarding_value < batch_value + connector_value + exit_value:
            raise Reject("InsufficientLiquidity")
        # each verified request already carries fee headroom, so the fee
        # surplus accrues inside the change output
        change = have + boarding_value - batch_value - connector_value - exit_value
        if change < 0:
            raise Reject("InsufficientLiquidity")

        ins = [op for op, _ in funding] + [op for op, _ in boarding_ins]
        outs: List[Output] = []
        out_index: Dict[str, int] = {}
        if leaves:
            out_index["batch"] = len(outs)
            members = [self.pk] + [v.owner_pk for v in leaves]
            uniq = {m.hex(): m for m in members}
            outs.append(Output(batch_value, batch_lock(
                self.pk, crypto.aggregate(uniq.values()), expiry)))
        if forfeited:
            out_index["connector"] = len(outs)
            outs.append(Output(connector_value, p2pk(self.pk)))
        for v, lock in exit_outs:
            outs.append(Output(v, lock))
        if change > 0:
            out_index["change"] = len(outs)
            outs.append(Output(change, p2pk(self.pk)))
        commitment = Tx(ins=tuple(ins), outs=tuple(outs))

        batch = None
        signer_tree: SignerTree = {}
        if leaves:
            fund_op = commitment.outpoint(out_index["batch"])
            vtxt, signer_tree = build_vtxt(fund_op, leaves, self.pk, expiry,
                                           self.policy.arity)
            batch = BatchOutput(batch_value, expiry, outs[out_index["batch"]].lock,
                                vtxt, signer_tree)
        connector = None
        gamma: Dict[Tuple[str, int], OutPoint] = {}
        if forfeited:
            conn_op = commitment.outpoint(out_index["connector"])
            connector = build_connector(conn_op, len(forfeited), self.pk,
                                        self.params.epsilon, self.policy.arity)
            for v, anchor in zip(forfeited, connector.anchors):
                gamma[v.key()] = anchor

        account = {
            "L": have, "B": boarding_value, "V": batch_value,
            "U": exit_value, "M": change, "F": request_fees,
            "connector": connector_value,
        }
        # conservation-tx identity: everything in equals everything out
        assert account["L"] + account["B"] == \
            account["V"] + account["U"] + account["M"] + connector_value

        return Bundle(commitment, batch, connector, gamma, boardings, swaps,
                      exits, funding, boarding_ins, leaf_by_request,
                      account=account)

    # --- signing ceremony ------------------------------------------------

    def run_signing(self, bundle: Bundle, wallets: Dict[str, "object"],
                    abort: Optional[Callable[[str, str], bool]] = None,
                    extra_secrets: Optional[Dict[str, SecretKey]] = None) -> Bundle:
        """Gather every signature for a commitment, in the safe order:
        (1) parties verify the bundle, (2) VTXT cosign sessions,
        (3) forfeits collected and checked, (4) boarding cosigns,
        (5) only then the operator signs its funding inputs.
        Any failure aborts with no witnesses released to anyone."""
        def maybe_abort(step: str, party: str) -> None:
            if abort is not None and abort(step, party):
                raise SessionAborted(f"{step}: {party} unresponsive")

        parties = {r.party for r in bundle.boardings + bundle.swaps + bundle.exits}
        # step 1: every involved party verifies the bundle
        for party in sorted(parties):
            maybe_abort("verify", party)
            wallet = wallets[party]
            if not wallet.verify_commitment(bundle):
                raise SessionAborted(f"verify: {party} rejected the bundle")

        secrets: Dict[str, SecretKey] = {self.pk.hex(): self.sk}
        for party in parties:
            secrets[wallets[party].pk.hex()] = wallets[party].sk
        if extra_secrets:
            secrets.update(extra_secrets)

        # step 2: VTXT cosigning sessions, root first
        if bundle.batch is not None:
            vtxt = bundle.batch.vtxt
            for txid in vtxt.order:
                members = bundle.batch.signers[txid]
                for m in members:
                    owner = self._party_of(m, wallets)
                    if owner is not None:
                        maybe_abort("vtxt", owner)
                tx = vtxt.txs[txid]
                sig = self._cosign(tx, members, secrets, "vtxt")
                tx.wits = [Witness(BATCH_UNROLL_PATH, (sig,),
                                   vtxt.input_locks[txid].paths)]

        # step 3: forfeit transactions, collected and checked; the spent
        # path is the input lock's own collaborative aggregate, which may
        # name a previous operator (handover)
        for r in bundle.swaps:
            for v in r.inputs:
                maybe_abort("forfeit", r.party)
                anchor = bundle.gamma[v.key()]
                ff = forfeit_tx(v, anchor, self.pk, self.params.epsilon)
                collab_idx0, agg = collab_aggregate(v.lock)
                collab_idx = [collab_idx0]
                members = agg.members
                sig = self._cosign(ff, members, secrets, "forfeit")
                anchor_sig = crypto.sign(self.sk, ff.digest())
                ff.wits = [Witness(collab_idx[0], (sig,), v.lock.paths),
                           Witness(KEY_PATH, (anchor_sig,))]
                if ff.ins != (v.outpoint, anchor):
                    raise SessionAborted("forfeit inputs do not match")
                bundle.forfeits[v.key()] = ff

        # step 4: boarding cosigns
        for r, (op, out) in zip(bundle.boardings, bundle.boarding_ins):
            maybe_abort("boarding", r.party)
            members = crypto.aggregate([wallets[r.party].pk, self.pk]).members
            sig = self._cosign(bundle.commitment, members, secrets, "boarding")
            idx = bundle.commitment.ins.index(op)
            while len(bundle.commitment.wits) <= idx:
                bundle.commitment.wits.append(None)  # type: ignore[arg-type]
            bundle.commitment.wits[idx] = Witness(
                BOARDING_COOP_PATH, (sig,), out.lock.paths)

        # step 5: the operator funds the commitment only now
        maybe_abort("fund", self.name)
        for op, out in bundle.funding_ins:
            idx = bundle.commitment.ins.index(op)
            while len(bundle.commitment.wits) <= idx:
                bundle.commitment.wits.append(None)  # type: ignore[arg-type]
            sig = crypto.sign(self.sk, bundle.commitment.digest())
            bundle.commitment.wits[idx] = Witness(KEY_PATH, (sig,))
            self.signing_log.append(f"fund:{bundle.commitment.txid[:8]}")
        return bundle

    def _party_of(self, pk: PublicKey, wallets: Dict[str, "object"]) -> Optional[str]:
        for name, w in wallets.items():
            if w.pk == pk:
                return name
        return None

    # --- submission and tracking ----------------------------------------

    def submit_and_track(self, bundle: Bundle) -> None:
        self.chain.submit(bundle.commitment, self.name)
        bundle.submit_height = self.chain.height
        self.pending_bundles.append(bundle)
        self.book.toBoard = [r for r in self.book.toBoard if r not in bundle.boardings]
        self.book.toBatchSwap = [r for r in self.book.toBatchSwap if r not in bundle.swaps]
        self.book.toExit = [r for r in self.book.toExit if r not in bundle.exits]
        self.book.unconfirmedBoardings.extend(bundle.boardings)
        self.book.unconfirmedBatchSwaps.extend(bundle.swaps)
        self.book.unconfirmedExits.extend(bundle.exits)
        if bundle.batch is not None:
            for leaf in bundle.batch.vtxt.leaves:
                self.book.unconfirmed.append(leaf.vtxo)
        self.rounds_since_commit = 0
        self.events.append({"event": "commitment_submitted",
                            "txid": bundle.commitment.txid,
                            "height": bundle.submit_height})

    def _apply_confirmed(self, bundle: Bundle) -> None:
        book = self.book
        if bundle.batch is not None:
            record = BatchRecord(bundle.batch.vtxt.funding, bundle.batch,
                                 bundle.commitment.txid)
            book.confirmedBatches.append(record)
            for leaf in bundle.batch.vtxt.leaves:
                v = leaf.vtxo
                if v in book.unconfirmed:
                    book.unconfirmed.remove(v)
                book.confirmedVTXO[v.key()] = v
                book.preConfirmed.pop(v.key(), None)
        for r in bundle.swaps:
            for v in r.inputs:
                key = v.key()
                book.confirmedVTXO.pop(key, None)
                book.preConfirmed.pop(key, None)
                book.spent.append((v, bundle.forfeits[key]))
        for lst_from, lst_to, reqs in (
            (book.unconfirmedBoardings, book.confirmedBoardings, bundle.boardings),
            (book.unconfirmedBatchSwaps, book.confirmedBatchSwaps, bundle.swaps),
            (book.unconfirmedExits, book.confirmedExits, bundle.exits),
        ):
            for r in reqs:
                if r in lst_from:
                    lst_from.remove(r)
                lst_to.append(r)
        self.collected_fees += bundle.account.get("F", 0)
        # spent funding outputs leave the liquidity list; change re-enters
        spent_ops = set(bundle.commitment.ins)
        self.liquidity = [(op, out) for op, out in self.liquidity
                          if op not in spent_ops]
        for i, out in enumerate(bundle.commitment.outs):
            if out.lock == p2pk(self.pk):
                self.liquidity.append((bundle.commitment.outpoint(i), out))
        self._confirmed_bundles.append(bundle)
        self.events.append({"event": "commitment_confirmed",
                            "txid": bundle.commitment.txid,
                            "height": self.chain.height})

    def _rollback(self, bundle: Bundle) -> None:
        book = self.book
        for r in bundle.boardings:
            key = (r.boarding_outpoint.txid, r.boarding_outpoint.index)
            book.preSpent.discard(key)
            if r in book.unconfirmedBoardings:
                book.unconfirmedBoardings.remove(r)
            book.toBoard.append(r)
        for r in bundle.swaps:
            for v in r.inputs:
                book.preSpent.discard(v.key())
            if r in book.unconfirmedBatchSwaps:
                book.unconfirmedBatchSwaps.remove(r)
            book.toBatchSwap.append(r)
        for r in bundle.exits:
            for v in r.inputs:
                book.preSpent.discard(v.key())
            if r in book.unconfirmedExits:
                book.unconfirmedExits.remove(r)
            book.toExit.append(r)
        if bundle.batch is not None:
            for leaf in bundle.batch.vtxt.leaves:
                if leaf.vtxo in book.unconfirmed:
                    book.unconfirmed.remove(leaf.vtxo)
                book.preConfirmed.pop(leaf.vtxo.key(), None)
        book.replaced.append(bundle.commitment)
        self.events.append({"event": "commitment_rolled_back",
                            "txid": bundle.commitment.txid,
                            "height": self.chain.height})

    # --- sweeping --------------------------------------------------------

    def _sweep_outpoint(self, op: OutPoint, value: int) -> List[Tx]:
        """Routine-13 recursion: claim the output if still unspent, else
        descend into its unrolled children that carry a sweep path."""
        chain = self.chain
        if chain.unspent(op):
            entry = chain.utxos[op]
            height = sweep_path_height(entry.output.lock)
            if height is None:
                return []
            sweep = Tx(ins=(op,), outs=(Output(entry.output.value, p2pk(self.pk)),))
            idx = next(i for i, p in enumerate(entry.output.lock.paths)
                       if sweep_path_height(taproot(UNSPENDABLE, [p])) == height)
            sig = crypto.sign(self.sk, sweep.digest())
            sweep.wits = [Witness(idx, (sig,), entry.output.lock.paths)]
            try:
                chain.submit(sweep, self.name)
            except SubmitError:
                return []
            return [sweep]
        spender = chain.spent_by.get(op)
        if spender is None or not chain.is_confirmed(spender):
            return []
        submitted: List[Tx] = []
        child = chain.records[spender].tx
        for i, out in enumerate(child.outs):
            if sweep_path_height(out.lock) is not None:
                submitted.extend(self._sweep_outpoint(child.outpoint(i), out.value))
        return submitted

    def sweep(self, record: BatchRecord) -> List[Tx]:
        return self._sweep_outpoint(record.outpoint, record.batch.value)

    # --- per-round watcher ----------------------------------------------

    def watch_step(self) -> List[Tx]:
        """Routine-19 loop: track pending commitments, sweep expired
        batches and reset outputs, and answer unrolled spent VTXOs with
        their stored reset or forfeit transactions."""
        chain = self.chain
        submitted: List[Tx] = []
        self.rounds_since_commit += 1

        for bundle in list(self.pending_bundles):
            if chain.is_stable(bundle.commitment.txid):
                self._apply_confirmed(bundle)
                self.pending_bundles.remove(bundle)
            elif (bundle.submit_height is not None
                  and chain.height >= bundle.submit_height + self.params.t_r
                  and not chain.is_confirmed(bundle.commitment.txid)):
                self._rollback(bundle)
                self.pending_bundles.remove(bundle)

        # sweep expired batches (timed so the sweep lands at expiry)
        for record in list(self.book.confirmedBatches):
            if chain.height >= record.batch.expiry - 1:
                submitted.extend(self.sweep(record))
                if chain.height >= record.batch.expiry:
                    self.book.confirmedBatches.remove(record)
                    self.book.expired.append(record)
        # sweep reset outputs at their batch's expiry
        for entry in list(self.reset_sweeps):
            op, expiry, value = entry
            if chain.height >= expiry - 1:
                if op.txid in chain.records and chain.is_confirmed(op.txid):
                    submitted.extend(self._sweep_outpoint(op, value))
                if chain.height >= expiry:
                    self.reset_sweeps.remove(entry)

        # answer unrolled spent VTXOs
        for v, tx in list(self.book.spent):
            assert v.outpoint is not None
            if chain.unspent(v.outpoint) and not chain.is_confirmed(tx.txid):
                package = self._prerequisites(tx) + [tx]
                try:
                    chain.submit_package(package, self.name)
                    submitted.extend(package)
                except SubmitError:
                    pass
        return submitted

    def _prerequisites(self, tx: Tx) -> List[Tx]:
        """Connector-tree transactions needed before a forfeit's anchor
        input exists onchain."""
        need: List[Tx] = []
        for bundle in self._all_bundles():
            if bundle.connector is None or bundle.connector.vtxt is None:
                continue
            vtxt = bundle.connector.vtxt
            for op in tx.ins:
                if op.txid in vtxt.txs:
                    chainlink = []
                    cur: Optional[str] = op.txid
                    while cur is not None:
                        node = vtxt.txs[cur]
                        if not self.chain.is_confirmed(cur):
                            if not node.wits:
                                sig = crypto.sign(self.sk, node.digest())
                                node.wits = [Witness(KEY_PATH, (sig,))]
                            chainlink.append(node)
                        cur = vtxt.parent[cur]
                    need.extend(reversed(chainlink))
        return need

    def _all_bundles(self) -> List[Bundle]:
        return self.pending_bundles + self._confirmed_bundles

    @property
    def _confirmed_bundles(self) -> List[Bundle]:
        if not hasattr(self, "_confirmed_bundle_list"):
            self._confirmed_bundle_list: List[Bundle] = []
        return self._confirmed_bundle_list
