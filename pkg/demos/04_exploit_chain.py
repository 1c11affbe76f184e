"""From a forged descriptor table to kernel patches.

The malicious controller answers descriptor reads on high pages with
crafted entries. Their interrupt counts push the driver's counter past
the heap object that holds it. On the next interrupt the driver reads a
status block sized by that counter into a small stack buffer, which
overwrites the saved return address with a gadget chain.
"""

from touchsim.attacker import craft_descriptor_set
from touchsim.harness import run_scenario

crafted = craft_descriptor_set()
print(f"{len(crafted.descriptors)} crafted descriptors on slots "
      f"{', '.join(hex(s) for s in crafted.slots[:3])}, ...")
print("counter goes", crafted.initial_count, "->", crafted.final_count)

report, world = run_scenario("exploit")
drv = world.driver
print("driver's interrupt source count after boot:", drv.irq_source_count)
spills = [o for o in drv.sandbox.overflow_log if o.region == "irq_enable_map"]
print(f"heap spill: {len(spills)} writes past the enable map, "
      f"offsets {sorted({o.offset for o in spills})[:4]} ...")

for res in drv.interrupts:
    if res.rop is not None and res.rop.hijacked:
        calls = [(hex(c.arg0), hex(c.arg1)) for c in res.rop.call_log]
        print(f"status read of {res.status_read_len} bytes hijacked control, kernel writes {calls}")

stack = [o for o in drv.sandbox.overflow_log if o.region == "status_buf"]
print(f"stack smash: {stack[0].length} bytes past the status buffer")
print("kernel after the attack:", world.kernel.flags())
print("scenario passed:", report.passed)
