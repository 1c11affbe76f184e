"""A second driver family with a different bug.

This controller advertises a table of entities with a size each. The
driver copies every entity into a fixed 80-byte buffer without checking
the size, so a single oversized entity is enough to crash it.
"""

from touchsim.bus import Bus
from touchsim.controller import AtmelController, ControllerProfile
from touchsim.driver import atmel_probe

for size in (64, 80, 81, 2048):
    profile = ControllerProfile.load("atmel_like")
    profile.entities[-1]["size"] = size
    res, sandbox = atmel_probe(Bus(AtmelController(profile), profile="atmel_like"))
    spill = [(o.offset, o.length) for o in sandbox.overflow_log]
    print(f"last entity {size:5d} bytes: outcome={res.outcome:6s} overflow (offset, len)={spill}")
