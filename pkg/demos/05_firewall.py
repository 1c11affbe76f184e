"""Put a rule engine between the driver and the bus.

Each transfer is checked against an ordered rule list and the first
match decides. The shipped default policy refuses descriptor entries
on pages the genuine part never populates and oversized status reads.
The strict policy also caps touch rate at 20 taps per second.
"""

from touchsim.harness import run_scenario

for name in ("exploit", "phishing", "install"):
    for policy in (None, "default", "strict"):
        report, world = run_scenario(name, policy=policy)
        blocks = world.firewall.blocks if world.firewall else []
        rules = sorted({v.rule_id for _, v in blocks})
        print(f"{name:9s} {str(policy):8s} passed={report.passed!s:5s} "
              f"violations={world.violations:<4d} blocked={len(blocks):<3d} {rules}")

# The exploit stops at the very first forged descriptor.
_, world = run_scenario("exploit", policy="default")
txn, verdict = world.firewall.blocks[0]
print(f"first block: read of 0x{txn.reg_addr:04x} by rule {verdict.rule_id}")
print("kernel pristine:", world.kernel.pristine())
