# # Tracking without learning
#
# The gradient law drives the tracking error to zero but has no reason to
# find the ideal gains once the reference has settled. The combined law adds
# the memory term and recovers the gains too.

from dataclasses import replace

import cmrac

cfg = cmrac.load_bundled()
runs = {
    law: cmrac.run_episode(replace(cfg.sim, law=law), cfg.model, cfg.ref)
    for law in ("gradient", "combined")
}

for law, traj in runs.items():
    par = traj.kx_err_norm[-1] + abs(traj.kr_err[-1]) + traj.theta_err_norm[-1]
    print(f"{law:9s} final |e| = {traj.e_norm[-1]:.1e}   final parameter error = {par:.3e}")

# Both runs are identical until the memory fills.

g, c = runs["gradient"], runs["combined"]
pre = c.t <= c.t_q
print("identical before t_q:", (g.gains[pre] == c.gains[pre]).all())
