"""Swap a typed URL for a look-alike before the user notices.

The interposer decodes keystrokes from the touch stream. When the user
presses Enter after a watched address, it blanks the screen, erases the
address, types the mapped one, and submits it, all in under a second.
"""

from touchsim.harness import run_scenario

report, world = run_scenario("phishing")
print(report.to_text())
print()
for t, kind, detail in world.attacker_events():
    print(f"{t / 1e6:8.3f} s  {kind:14s} {detail}")
print("browser ended on:", world.ui_state.url_buffer)
