# # Decay times over randomized episodes
#
# Each sample draws the command level, the initial estimate error and the
# initial state from the configured ranges. We count how many reach the 2%
# threshold and compare each elapsed time with the bound implied by the
# exponential envelope. Results land in ./mc_out as CSV.

from dataclasses import replace
import sys

import numpy as np

import cmrac
from cmrac.harness import write_results

n = int(sys.argv[1]) if len(sys.argv) > 1 else 20

cfg = cmrac.load_bundled()
cfg = replace(cfg, monte_carlo=replace(cfg.monte_carlo, n_samples=n))
results = cmrac.run_monte_carlo(cfg)

hits = [r for r in results if r.reached]
print(f"{len(hits)}/{len(results)} samples reached the threshold")
elapsed = np.array([r.elapsed for r in hits])
slack = np.array([r.elapsed_bound - r.elapsed for r in hits])
print(f"elapsed: min {elapsed.min():.2f} s, median {np.median(elapsed):.2f} s, max {elapsed.max():.2f} s")
print(f"smallest margin to the bound: {slack.min():.2f} s")

for path in write_results(results, "mc_out", cfg):
    print("wrote", path)
