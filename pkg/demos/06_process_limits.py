"""Rescaled-process comparisons: distance marginals, moments, heat kernel.

Each annealed sample draws a fresh environment and one walk, read at time
floor(t n^2 psi(n)) with the package's own estimated tables providing the
normalization.  The rescaled distance marginal is compared against
half-normal references by Kolmogorov-Smirnov distance; the doubled-time
column diagnoses the clock convention of the limit (see the ledger note
in the README about the corollary constant).  No Brownian paths are ever
simulated: reference moments and densities are analytic.

Runtime: a few minutes.
"""

import math

from rangewalk import compare_to_limit, environment_tables, \
    estimate_lambda_prefix, estimate_slowly_varying, rescaled_process_samples
from rangewalk.scaling import (
    exit_time_samples,
    exit_time_scaling,
    solve_time_scale,
)
from rangewalk.seeds import derive_key

MASTER = 271828
tables = environment_tables(4, [2 ** k for k in range(4, 13)], 120, MASTER)
fit = estimate_slowly_varying(tables, MASTER, min_seeds=100)
lam = estimate_lambda_prefix(tables, MASTER, min_seeds=100).pooled.value
psi_tilde, phi = fit.psi_tilde, fit.phi
psi = psi_tilde.scaled(lam)
print(f"normalization: lambda = {lam:.4f}")

for steps in (2 ** 13, 2 ** 15):
    n_eff = solve_time_scale(psi, steps)
    samples = rescaled_process_samples(4, n_eff, [0.5, 1.0], 500,
                                       derive_key(MASTER, 1, steps), phi, psi)
    report = compare_to_limit(samples, MASTER)
    print(f"\nwalk duration {steps} (spatial scale n = {n_eff}):")
    for entry in report.ks:
        print(f"  t = {entry['t']:.2f}: KS vs |N(0,t)| = "
              f"{entry['statistic']:.3f} "
              f"[{entry['ci_low']:.3f}, {entry['ci_high']:.3f}]; "
              f"doubled-time KS = {entry['statistic_doubled_time']:.3f}")
    for m in report.moments:
        print(f"  t = {m['t']:.2f}: component mean z {m['mean_z_max']:.2f}, "
              f"isotropy z {m['isotropy_z_max']:.2f}, "
              f"radial 2nd moment {m['radial_second_moment']:.3f}")

# exit-time scaling ratios across a dyadic radius grid
tau_by_r, cens = {}, {}
for r in (8, 16, 32, 64):
    phi_r, psi_r = float(phi.at(r)), float(psi_tilde.at(r))
    taus, c = exit_time_samples(4, float(r), 48, derive_key(MASTER, 2, r),
                                env_horizon=int(24 * r / phi_r),
                                max_steps=int(30 * r * r * psi_r / phi_r ** 2
                                              + 1000))
    tau_by_r[float(r)] = taus
    cens[float(r)] = c
rep = exit_time_scaling(tau_by_r, psi_tilde, phi, censored_by_r=cens)
print("\nexit-time ratios E(tau_r)/(r^2 psi~(r) phi(r)^-2):")
for row in rep.rows:
    print(f"  r = {row.r:4.0f}: {row.ratio:.3f} "
          f"(mean tau {row.mean_tau:.0f}, censored {row.censored})")
print(f"spread max/min = {rep.max_over_min:.2f} "
      f"(within factor {rep.band}: {rep.within_band})")
