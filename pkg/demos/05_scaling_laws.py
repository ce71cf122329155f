"""Desk-scale estimation of the scaling constants and log corrections.

Estimates, from fresh-environment ensembles: the volume constant (two
independent routes), the cut-time density and its reciprocal, and the
slowly-varying resistance/distance corrections with their fitted
log-log-n exponents.  At any feasible horizon log log n only spans
2.3..2.7, so the fitted exponents are compared against generous bands
around the conjectured -1/2 rather than asserted to equal it; a
five-dimensional control shows the corrections vanish one dimension up.

Runtime: a few minutes at the default sizes.
"""

import math

from rangewalk import (
    environment_tables,
    estimate_alpha_tau,
    estimate_lambda_prefix,
    estimate_lambda_two_sided,
    estimate_slowly_varying,
)
from rangewalk.scaling import sample_two_sided_y

GRID = [2 ** k for k in range(10, 17)]
SEEDS = 20
MASTER = 314159

tables = environment_tables(4, GRID, SEEDS, MASTER)

lam = estimate_lambda_prefix(tables, MASTER, min_seeds=SEEDS)
print("volume constant, prefix route:")
for n, est in lam.per_n.items():
    print(f"  n = {n:6d}: {est.value:.4f} "
          f"[{est.ci_low:.4f}, {est.ci_high:.4f}]")

y = sample_two_sided_y(4, n_pairs=3000, truncation_m=256, master_seed=MASTER)
lam2 = estimate_lambda_two_sided(y, MASTER)
print(f"two-sided route: {lam2.value:.4f} "
      f"[{lam2.ci_low:.4f}, {lam2.ci_high:.4f}]  "
      f"(prefix pooled {lam.pooled.value:.4f})")

fit = estimate_slowly_varying(tables, MASTER, min_seeds=SEEDS)
cut = estimate_alpha_tau(tables, MASTER)
print("\nslowly-varying tables (mean over seeds):")
print(f"{'n':>8} {'R/n':>8} {'d/n':>8} {'N_n/n':>8}")
for n in GRID:
    print(f"{n:8d} {fit.psi_tilde.table[n]:8.4f} {fit.phi.table[n]:8.4f} "
          f"{cut.ncut_over_n[n]:8.4f}")
print(f"\nfitted exponents of (log n) [conjectured -1/2 asymptotically]:")
print(f"  resistance: {fit.slope_psi_tilde.value:+.3f} "
      f"[{fit.slope_psi_tilde.ci_low:+.3f}, {fit.slope_psi_tilde.ci_high:+.3f}]")
print(f"  distance:   {fit.slope_phi.value:+.3f} "
      f"[{fit.slope_phi.ci_low:+.3f}, {fit.slope_phi.ci_high:+.3f}]")
print(f"  cut counts: {cut.slope_ncut.value:+.3f} "
      f"[{cut.slope_ncut.ci_low:+.3f}, {cut.slope_ncut.ci_high:+.3f}]")
print(f"cut-time density alpha = {cut.alpha.value:.4f}, "
      f"tau = 1/alpha = {cut.tau:.4f}")

ctrl = environment_tables(5, GRID, SEEDS, MASTER + 1)
fit5 = estimate_slowly_varying(ctrl, MASTER + 1, min_seeds=SEEDS)
print(f"\nd = 5 control exponents (should hug zero): "
      f"resistance {fit5.slope_psi_tilde.value:+.3f}, "
      f"distance {fit5.slope_phi.value:+.3f}")
print(f"d = 5 ratios are flat: R/n = "
      f"{fit5.psi_tilde.table[GRID[0]]:.3f} at n={GRID[0]} vs "
      f"{fit5.psi_tilde.table[GRID[-1]]:.3f} at n={GRID[-1]}")
