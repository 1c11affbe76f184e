"""Boot a stock touch controller and watch one tap travel to the host.

The driver walks the descriptor pages, sums the interrupt sources it
found, checks firmware, and then services a single finger-down.
Every transfer lands in the bus trace with its microsecond timestamp.
"""

from touchsim.bus import Bus, busy_time
from touchsim.controller import SynapticsController, TouchFrame, TouchState
from touchsim.driver import SynapticsDriver
from touchsim.trace import dumps

ctl = SynapticsController()
bus = Bus(ctl)
delivered = []
drv = SynapticsDriver(bus, sink=delivered.extend)

probe = drv.boot_probe()
print("functions found:", [f"0x{d.function_id:02x}" for _, d in drv.functions])
print("interrupt sources:", drv.irq_source_count)
print("firmware:", probe.firmware.value)
print("boot took", bus.now, "us of simulated time")

ctl.queue_touch(TouchFrame.tap(540, 1200, TouchState.DOWN))
bus.sched.run()
print("host received:", [(e.x, e.y, e.state.name) for e in delivered])
print("sandbox violations:", drv.sandbox.violations)

# The trace is JSON lines: a header, then one record per transfer or edge.
text = dumps(bus.trace)
print(f"{len(bus.trace.records)} records, bus busy for {busy_time(bus.trace.records)} us")
print("\n".join(text.splitlines()[:6]))
