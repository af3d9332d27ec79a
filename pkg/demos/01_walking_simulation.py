"""Walking-simulation walkthrough.

Runs seeded multiuser sessions in the 15 m square room, prints safety
statistics (boundary clearance, inter-user distances, reset counts), and
shows the 2:1 physical/virtual rotation identity on every reset.  Writes
one trace CSV next to this script for inspection.
"""

import os

import numpy as np

from vrmotion.simulator import SimConfig, run_session

HERE = os.path.dirname(os.path.abspath(__file__))

# --- one user walking straight ---------------------------------------------

config = SimConfig(num_users=1, path_kind="straight", duration=120.0, rate=20.0)
trace = run_session(config, seed=0)

print("single user, straight virtual path, 120 s @ 20 Hz")
print(f"  ticks: {trace.n_ticks}, resets: {len(trace.reset_events)}")
print(f"  physical x range: [{trace.phys[0, :, 0].min():.2f}, "
      f"{trace.phys[0, :, 0].max():.2f}] m (room is [0, 15])")
print(f"  virtual path length: "
      f"{np.sum(np.hypot(*np.diff(trace.virt[0], axis=0).T)):.1f} m")

# every reset turns the user 180 degrees physically while the virtual scene
# rotates twice as far, completing a full virtual 360
for ev in trace.reset_events[:3]:
    print(f"  reset at t={ev.time:6.2f}s trigger={ev.trigger:8s} "
          f"physical={ev.physical_executed:.1f} deg "
          f"virtual={ev.virtual_executed:.1f} deg")

# --- three users on random curved paths -------------------------------------

config = SimConfig(num_users=3, path_kind="random_curved", duration=120.0,
                   rate=20.0)
trace = run_session(config, seed=1)

min_dist = min(
    float(np.hypot(trace.phys[a, :, 0] - trace.phys[b, :, 0],
                   trace.phys[a, :, 1] - trace.phys[b, :, 1]).min())
    for a in range(3) for b in range(a + 1, 3))
print("\nthree users, random curved virtual paths, 120 s @ 20 Hz")
print(f"  resets: {len(trace.reset_events)} "
      f"(boundary: {sum(e.trigger == 'boundary' for e in trace.reset_events)}, "
      f"user: {sum(e.trigger == 'user' for e in trace.reset_events)})")
print(f"  closest inter-user approach: {min_dist:.3f} m")

out = os.path.join(HERE, "trace_3users.csv")
trace.to_csv(out)
print(f"  trace written to {out}")
