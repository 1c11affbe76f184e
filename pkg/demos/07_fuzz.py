"""Fuzz the descriptor and entity parsers against independent models.

Each random table runs through the real driver in a sandbox and through
a small reference model of the same loop. Any disagreement is a bug in
one of them. A fixed corpus holds the known-bad tables.
"""

from touchsim.harness import fuzz

for profile in ("synaptics", "atmel"):
    summary = fuzz(profile, seed=7, iterations=300)
    print(f"{profile}: {len(summary.cases)} cases, {len(summary.violating)} violating, "
          f"{summary.crashes} crashes, {len(summary.mismatches)} reference mismatches")
    for case in summary.corpus:
        print(f"  corpus {case.name}: {case.classification}")

benign = fuzz("synaptics", seed=7, iterations=300, benign=True, corpus=False)
print("well-formed tables only:", len(benign.violating), "violations")
