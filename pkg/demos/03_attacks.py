"""Run the hostage and spam attacks, with and without the protocol's
countermeasures, and print the exact sat-level outcomes."""

from arksim.harness import run_scenario

print("== hostage attack ==")
for resets in (False, True):
    rep = run_scenario("hostage_attack", seed=0, resets=resets)
    label = "with resets" if resets else "without resets"
    print(f"{label:>15}: operator deficit {rep['deficit']} sats "
          f"(hostage vtxo worth {rep['hostage_value']})")

print("\n== spam attack ==")
rep = run_scenario("spam_attack", seed=0, hops=3)
acct = rep["fee_accounting"]
print(f"attacker published the whole off-chain chain herself: "
      f"{acct['mallory']['txs']} txs, {acct['mallory']['vbytes']} vB")
print(f"operator reclaimed the forfeit: {rep['forfeit_value']} sats")
for v in rep["verdicts"]:
    print(f"  verdict {v['name']}: {'PASS' if v['pass'] else 'FAIL'}")
