import copy

import pytest

from arksim import crypto
from arksim.arkcore import p2pk
from arksim.crypto import SessionAborted
from arksim.harness import Simulation
from arksim.ledger import Output, Params, Tx
from arksim.operator_node import BatchingPolicy, Reject, Request, VtxoSpec

PARAMS = Params(k=3, t_u=13, t_e=40, t_r=8)


def boarded_sim(seed=0, funds=5_000, use_resets=True, fee=0):
    sim = Simulation(PARAMS, seed, use_resets=use_resets,
                     policy=BatchingPolicy(arity=2, fee=fee))
    sim.operator.fund(100_000)
    sim.add_wallet("alice", [funds])
    sim.board("alice", [funds - fee])
    sim.settle_commitment()
    return sim


def first_vtxo(sim, name="alice"):
    return next(h.vtxo for h in sim.wallets[name].holdings.values())


# --- boarding ------------------------------------------------------------


def test_boarding_requires_stable_confirmation():
    sim = Simulation(PARAMS, 1)
    sim.operator.fund(10_000)
    w = sim.add_wallet("alice", [1_000])
    tx, req = w.make_boarding(w.funds, [1_000])
    from arksim.script import KEY_PATH, Witness
    tx.wits = [Witness(KEY_PATH, (crypto.sign(w.sk, tx.digest()),))
               for _ in tx.ins]
    sim.chain.submit(tx, "alice")
    sim.tick(1)     # confirmed but not yet k-deep
    with pytest.raises(Reject):
        sim.operator.verify_boarding(req)


def test_boarding_value_must_cover_request():
    sim = Simulation(PARAMS, 1)
    sim.operator.fund(10_000)
    w = sim.add_wallet("alice", [1_000])
    tx, req = w.make_boarding(w.funds, [1_000])
    bad = Request("boarding", "alice", boarding_outpoint=tx.outpoint(0),
                  boarding_output=None,
                  outputs=(VtxoSpec(2_000, "alice", w.pk),))
    from arksim.script import KEY_PATH, Witness
    tx.wits = [Witness(KEY_PATH, (crypto.sign(w.sk, tx.digest()),))
               for _ in tx.ins]
    sim.chain.submit(tx, "alice")
    sim.tick(PARAMS.k + 1)
    with pytest.raises(Reject):
        sim.operator.verify_boarding(bad)


def test_happy_boarding_yields_confirmed_vtxo():
    sim = boarded_sim()
    v = first_vtxo(sim)
    assert v.value == 5_000
    assert v.key() in sim.operator.book.confirmedVTXO


# --- single-spend discipline --------------------------------------------


def test_operator_refuses_double_swap_of_same_vtxo():
    sim = boarded_sim()
    v = first_vtxo(sim)
    alice = sim.wallets["alice"]
    r1 = Request("batch-swap", "alice", inputs=(v,),
                 outputs=(VtxoSpec(v.value, "alice", alice.pk),))
    sim.operator.verify_batch_swap(r1)
    r2 = Request("batch-swap", "alice", inputs=(v,),
                 outputs=(VtxoSpec(v.value, "alice", alice.pk),))
    with pytest.raises(Reject):
        sim.operator.verify_batch_swap(r2)


def test_operator_refuses_ark_after_swap():
    sim = boarded_sim()
    v = first_vtxo(sim)
    alice = sim.wallets["alice"]
    sim.operator.verify_batch_swap(
        Request("batch-swap", "alice", inputs=(v,),
                outputs=(VtxoSpec(v.value, "alice", alice.pk),)))
    req = alice.make_ark_request([v], [VtxoSpec(v.value, "alice", alice.pk)])
    with pytest.raises(Reject):
        sim.operator.verify_ark_request(req, {alice.pk.hex(): alice.sk})


def test_ark_request_value_bounded():
    sim = boarded_sim()
    v = first_vtxo(sim)
    alice = sim.wallets["alice"]
    req = alice.make_ark_request([v], [VtxoSpec(v.value + 1, "alice", alice.pk)])
    with pytest.raises(Reject):
        sim.operator.verify_ark_request(req, {alice.pk.hex(): alice.sk})


def test_ark_request_requires_matching_reset():
    sim = boarded_sim()
    v = first_vtxo(sim)
    alice = sim.wallets["alice"]
    req = alice.make_ark_request([v], [VtxoSpec(v.value, "alice", alice.pk)])
    req = Request("ark", "alice", inputs=req.inputs, outputs=req.outputs,
                  resets=(), input_expiries=req.input_expiries)
    with pytest.raises(Reject):
        sim.operator.verify_ark_request(req, {alice.pk.hex(): alice.sk})


# --- ceremony and rollback ----------------------------------------------


def test_abort_releases_nothing():
    sim = boarded_sim()
    alice = sim.wallets["alice"]
    v = first_vtxo(sim)
    alice.make_swap([v], [v.value])
    sim.operator.verify_batch_swap(alice.open_requests[-1])
    book_before = (dict(sim.operator.book.confirmedVTXO),
                   list(sim.operator.book.toBatchSwap))
    log_before = len(sim.operator.signing_log)
    with pytest.raises(SessionAborted):
        sim.settle_commitment(abort=lambda step, party: step == "fund")
    # the queue and confirmed set are unchanged; no commitment onchain
    assert dict(sim.operator.book.confirmedVTXO) == book_before[0]
    assert list(sim.operator.book.toBatchSwap) == book_before[1]
    assert all(not e.startswith("fund:") for e in
               sim.operator.signing_log[log_before:])


def test_rollback_requeues_requests():
    sim = boarded_sim()
    alice = sim.wallets["alice"]
    v = first_vtxo(sim)
    alice.make_swap([v], [v.value])
    sim.operator.verify_batch_swap(alice.open_requests[-1])
    bundle = sim.operator.assemble_commitment()
    sim.operator.run_signing(bundle, sim.wallets)
    # sabotage: strip witnesses so the commitment can never confirm
    bundle.commitment.wits = []
    sim.operator.pending_bundles.append(bundle)
    bundle.submit_height = sim.chain.height
    sim.tick(PARAMS.t_r + 2)
    assert bundle not in sim.operator.pending_bundles
    assert any(r.kind == "batch-swap" for r in sim.operator.book.toBatchSwap)
    assert v.key() in sim.operator.book.confirmedVTXO


def test_sweep_lands_at_expiry():
    sim = boarded_sim()
    record = sim.operator.book.confirmedBatches[0]
    expiry = record.batch.expiry
    while sim.chain.height < expiry + 2 * PARAMS.k:
        sim.tick(1)
    swept = [ev for ev in sim.chain.events
             if ev["event"] == "confirmed" and ev["party"] == "operator"
             and ev["height"] >= expiry]
    assert swept, "no sweep confirmed at expiry"
    assert min(ev["height"] for ev in swept) == expiry


# --- wallet-side bundle audit -------------------------------------------


def swap_bundle(sim):
    alice = sim.wallets["alice"]
    v = first_vtxo(sim)
    alice.make_swap([v], [v.value])
    sim.operator.verify_batch_swap(alice.open_requests[-1])
    return sim.operator.assemble_commitment()


def test_wallet_accepts_honest_bundle():
    sim = boarded_sim()
    bundle = swap_bundle(sim)
    assert sim.wallets["alice"].verify_commitment(bundle)


def test_wallet_rejects_value_creation():
    sim = boarded_sim()
    bundle = swap_bundle(sim)
    bad = copy.deepcopy(bundle)
    outs = list(bad.commitment.outs)
    outs[0] = Output(outs[0].value + 1, outs[0].lock)
    bad.commitment = Tx(ins=bad.commitment.ins, outs=tuple(outs))
    assert not sim.wallets["alice"].verify_commitment(bad)


def test_wallet_rejects_short_expiry():
    sim = boarded_sim()
    bundle = swap_bundle(sim)
    bad = copy.deepcopy(bundle)
    bad.batch.expiry = sim.chain.height + 2 * PARAMS.k + PARAMS.t_e - 1
    assert not sim.wallets["alice"].verify_commitment(bad)


def test_wallet_rejects_missing_own_leaf():
    sim = boarded_sim()
    bundle = swap_bundle(sim)
    bad = copy.deepcopy(bundle)
    for i in bad.leaf_by_request:
        bad.leaf_by_request[i] = []
    assert not sim.wallets["alice"].verify_commitment(bad)


def test_wallet_rejects_wrong_leaf_value():
    sim = boarded_sim()
    bundle = swap_bundle(sim)
    bad = copy.deepcopy(bundle)
    for leaves in bad.leaf_by_request.values():
        for leaf in leaves:
            leaf.value -= 1
    assert not sim.wallets["alice"].verify_commitment(bad)


# --- payments and balances ----------------------------------------------


def test_payment_receipt_and_swap():
    sim = boarded_sim()
    sim.add_wallet("bob", [])
    v = first_vtxo(sim)
    payment = sim.ark_pay("alice", "bob", [v], 2_000)
    bob = sim.wallets["bob"]
    assert any(h.kind == "ark" and h.vtxo.value == 2_000
               for h in bob.holdings.values())
    assert any(e["event"] == "payment_accepted" for e in bob.log)


def test_payment_rejected_without_transcript():
    sim = boarded_sim()
    sim.add_wallet("bob", [])
    v = first_vtxo(sim)
    alice = sim.wallets["alice"]
    bob = sim.wallets["bob"]
    req = alice.make_ark_request([v], [VtxoSpec(2_000, "bob", bob.pk),
                                       VtxoSpec(v.value - 2_000, "alice", alice.pk)])
    payment = sim.operator.verify_ark_request(req, {alice.pk.hex(): alice.sk})
    payment.paths = [[] for _ in payment.ark.ins]   # transcript withheld
    assert bob.receive_payment(payment) is None
    assert any(e["event"] == "payment_rejected" for e in bob.log)


def test_balance_counts_unexpired_only():
    sim = boarded_sim()
    alice = sim.wallets["alice"]
    assert alice.balance() == 5_000
    v = first_vtxo(sim)
    while sim.chain.height < v.expiry - 2 * PARAMS.k:
        sim.tick(1, watch=False)
    assert alice.balance() == 0     # too close to expiry to be safe


def test_unilateral_exit_confirms():
    sim = boarded_sim()
    alice = sim.wallets["alice"]
    v = first_vtxo(sim)
    alice.unilateral_exit(v)
    sim.tick(2 * PARAMS.k, watch=False)
    assert sim.chain.unspent(v.outpoint)


def test_spend_policy_fires_at_deadline():
    sim = boarded_sim()
    alice = sim.wallets["alice"]
    v = first_vtxo(sim)
    deadline = v.expiry - 2 * PARAMS.k - 1
    while sim.chain.height < deadline - 1:
        sim.tick(1, watch=False)
        assert not alice.spend_policy_step() or sim.chain.height >= deadline
    sim.tick(1, watch=False)
    assert sim.chain.height >= deadline or alice.spend_policy_step()
    while sim.chain.height < v.expiry:
        sim.tick(1, watch=False)
        alice.spend_policy_step()
    assert sim.chain.unspent(v.outpoint)
