# # One closed-loop episode
#
# The bundled scenario is a second-order plant with a quadratic uncertainty
# in the input channel. We run it once with the combined adaptation law and
# look at when the memory fills and how fast the errors die out afterwards.

import numpy as np

import cmrac
from cmrac.sim import decay_time, envelope

cfg = cmrac.load_bundled()
model, ref = cfg.model, cfg.ref
print("P =\n", ref.P)

ideal = cmrac.matching_gains(model, ref)
print("ideal k_x, k_r, theta:", ideal.k_x, ideal.k_r, ideal.theta)

# The initial estimate is 50% off every ideal gain.

traj = cmrac.run_episode(cfg.sim, model, ref)
print(f"memory complete at t_q = {traj.t_q:.3f} s")

# Sample the error norms once per simulated second.

for t in range(0, 21, 2):
    j = int(round(t / cfg.sim.dt))
    print(f"t={t:2d}  |e|={traj.e_norm[j]:.2e}  |kx err|={traj.kx_err_norm[j]:.2e}  "
          f"|kr err|={abs(traj.kr_err[j]):.2e}  |theta err|={traj.theta_err_norm[j]:.2e}")

# After t_q the combined error must stay under the exponential envelope.

kappa_bar, kappa, alpha = cmrac.theoretical_rate(ref.Q, ref.P, model.b, model.k_p)
after = traj.t > traj.t_q
ratio = traj.chi_norm[after] / envelope(traj, kappa, alpha)[after]
print(f"kappa_bar={kappa_bar}, kappa={kappa}, alpha={alpha:.4f}; worst ratio to envelope {ratio.max():.3f}")

t_hit, elapsed = decay_time(traj, ideal)
print(f"2% threshold reached at t={t_hit:.3f} s, {elapsed:.3f} s after t_q")

# V never increases.

print("max increase of V:", np.max(np.diff(traj.V)))
