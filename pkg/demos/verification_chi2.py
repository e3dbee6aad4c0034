"""Chi-squared verification of trajectory statistics against the analytic
density, on a binned (x, p, t) grid.

Three desk-scale runs show where the linked-trajectory ensemble is
statistically equivalent to the analytic Husimi evolution and where it is
not:

  * the incoherent mixture (no interference anywhere): equivalent,
  * a macroscopic superposition (x1 e^r >> 1, interference unobservably
    small): equivalent,
  * a microscopic superposition (x1 = 1, strong fringes): the time-zero
    slice and the marginals agree, but at interior times the positive
    pair ensemble cannot concentrate the interference term the way the
    analytic density does, and the time-averaged statistic leaves the band.
"""

import qtraj as qt

N = 200_000
CASES = [
    ("mixture (x1=1, r=2)", qt.SuperpositionSpec(0.5, 1.0, 2.0, mixture=True)),
    ("macroscopic superposition (x1=8, r=2)", qt.SuperpositionSpec(0.5, 8.0, 2.0)),
    ("microscopic superposition (x1=1, r=2)", qt.SuperpositionSpec(0.5, 1.0, 2.0)),
]

for label, spec in CASES:
    cfg = qt.MeasurementConfig.from_gtf(3.0, 30, n_samples=N, seed=11)
    grid = qt.Grid3.auto(spec, cfg, dx=0.1, dp=0.2)
    binned = qt.accumulate_counts(spec, cfg, grid)
    probs = qt.analytic_bin_probs(spec, cfg, grid)
    rep = qt.chi2_time_averaged(binned, probs)
    verdict = "PASS" if rep.passed else "FAIL"
    print(f"{label}:")
    print(f"  chi2_bar = {rep.chi2_bar:8.1f}   k = {rep.k:7.1f}   "
          f"band = [{rep.band_lo:.1f}, {rep.band_hi:.1f}]   -> {verdict}")
    worst = max(rep.per_slice, key=lambda s: s[1] / max(s[2], 1))
    print(f"  worst slice: t = {worst[0]:.1f} with chi2/k = {worst[1] / worst[2]:.2f}")
print()
print("The microscopic case fails only at interior times; its t = 0 slice and")
print("every single-variable marginal agree with the analytic forms (see the")
print("fringe and variance demos).")
