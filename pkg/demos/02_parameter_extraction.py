# # Reading the plant parameters out of the memory
#
# The filtered regressor and filtered state derivative satisfy
# y_f = W^T phi_f. Once q independent filtered samples are stored, the
# orthonormal memory gives W^T back directly.

import numpy as np

import cmrac
from cmrac.excitation import extract_params

cfg = cmrac.load_bundled()
model = cfg.model
traj = cmrac.run_episode(cfg.sim, model, cfg.ref)

np.set_printoptions(precision=6, suppress=True)
print("true W^T =\n", model.W_T)
print("Y_m at t_q =\n", traj.Y_m)
print("max entrywise error:", np.max(np.abs(traj.Y_m - model.W_T)))

# The stored basis is orthonormal, so Phi_m = Phi_b Phi_b^T is the identity.

print("max |Phi_b^T Phi_b - I|:", np.max(np.abs(traj.Phi_b.T @ traj.Phi_b - np.eye(model.q))))

# Split Y_m into A, b k_p and b k_p theta^T, and de-factor theta.

ext = extract_params(traj.Y_m, model.n, model.p)
print("A_hat =\n", ext.A_hat)
print("b k_p hat =", ext.bkp_hat)
print("theta hat =", ext.theta_hat, " (true", model.theta, ")")
