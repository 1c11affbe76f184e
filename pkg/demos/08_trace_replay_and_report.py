"""Record a run, replay it bit for bit, and summarize a trace file.

Replay swaps the controller and the attacker for a responder that
returns exactly what the trace recorded. Driver code runs for real, so
the replayed trace must match the original byte for byte.
"""

import tempfile
from pathlib import Path

from touchsim.harness import replay_scenario, run_scenario, summarize_trace
from touchsim.trace import dumps, export_trace, import_trace

report, world = run_scenario("exploit", policy="default")
path = Path(tempfile.mkdtemp()) / "exploit.jsonl"
export_trace(world.bus.trace, path)
print(f"wrote {len(world.bus.trace.records)} records to {path.name}")

again, replayed = replay_scenario(path)
same = dumps(replayed.bus.trace) == dumps(world.bus.trace)
print("replayed trace identical:", same)
print("replayed checks agree:", again.replayable_view() == report.replayable_view())

print()
print(summarize_trace(import_trace(path)).to_text())
