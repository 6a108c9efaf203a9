"""Selecting intervention-affected taxa with mirror statistics
=============================================================

Which taxa does the intervention actually affect? The selection pipeline
answers with false-discovery-rate control and no parametric model of the
effect:

1. split the subjects into two halves and fit a transfer model on each;
2. for every (taxon, lag) compute each half's partial dependence -- the mean
   forecast difference between intervention-on and intervention-off;
3. combine the two estimates into a mirror statistic
   M = sign(PD1 * PD2) * (|PD1| + |PD2|): consistent signals give large
   positive M, null taxa fall symmetrically around zero;
4. select "M > t*" with t* the smallest threshold whose estimated false
   discovery proportion #{M < -t} / #{M > t} is below the target q;
5. repeat over many random splits and keep the taxa whose inclusion rate
   survives the aggregation budget.

Everything below runs against simulated data, so the selection can be
scored against the generator's ground truth.
"""

import numpy as np

from transferfx import (BoostConfig, SimConfig, fdp_estimate, fit_transfer,
                        inference_eval, mirror_statistics, select_taxa,
                        simulate)
from transferfx.normalize import (MODE_SIZE_FACTOR_ASINH, apply_normalization,
                                  size_factors_auto)

print("=" * 72)
print("1. Simulated cohort with 50% affected taxa")
print("=" * 72)

config = SimConfig(J=24, pi0=0.5, b=1.5, n_subjects=20, T=20, seed=7)
counts, truth = simulate(config)
cohort = apply_normalization(counts, MODE_SIZE_FACTOR_ASINH,
                             size_factors_auto(counts))
print(f"J={config.J} taxa, {config.n_subjects} subjects; truly affected: "
      f"{truth.J1}")


def recipe(train):
    return fit_transfer(train, P=2, Q=2,
                        config=BoostConfig(n_rounds=40, max_depth=2, seed=0))


print()
print("=" * 72)
print("2. One split by hand: PD pairs and mirrors")
print("=" * 72)

report = select_taxa(cohort, np.ones(1), np.zeros(1), recipe,
                     q=0.2, lags=(0, 1), n_splits=8, seed=7)

# Look at split 0, lag 0: the mirror formula applied to its PD pair.
pd1, pd2 = report.pd1[0, 0], report.pd2[0, 0]
mirrors = mirror_statistics(pd1, pd2)
assert np.array_equal(mirrors, report.mirrors[0, 0])
order = np.argsort(-np.abs(mirrors))[:5]
print(f"{'taxon':>10} {'PD half1':>9} {'PD half2':>9} {'mirror':>8}  truth")
for j in order:
    tag = "affected" if j in truth.J1 else "null"
    print(f"{cohort.taxa_names[j]:>10} {pd1[j]:>9.3f} {pd2[j]:>9.3f} "
          f"{mirrors[j]:>8.3f}  {tag}")
pooled = report.mirrors[0].ravel()
t = report.thresholds[0]
print(f"\nsplit 0 threshold t* = {t:.4f}; estimated FDP at t*: "
      f"{fdp_estimate(pooled, t):.3f} (target q = {report.q})")

print()
print("=" * 72)
print("3. Aggregation over 8 splits")
print("=" * 72)

rates = report.inclusion_rates  # (n_lags, J)
sel_lag0 = report.selected_taxa_for_lag(0)
sel_lag1 = report.selected_taxa_for_lag(1)
print("taxa sorted by lag-0 inclusion rate:")
for j in np.argsort(-rates[0])[:8]:
    tag = "affected" if j in truth.J1 else "null"
    mark = "selected" if j in sel_lag0 else ""
    print(f"  {cohort.taxa_names[j]:>10} rate={rates[0][j]:.3f}  {tag:8s} {mark}")
print(f"\nselected at lag 0: {sel_lag0}")
print(f"selected at lag 1: {sel_lag1}")
print(f"selected at any lag: {report.selected_taxa}")

print()
print("=" * 72)
print("4. Scoring against the ground truth")
print("=" * 72)

for h, sel in ((0, sel_lag0), (1, sel_lag1)):
    fdp, power = inference_eval(sel, truth, h)
    print(f"lag {h}: FDP = {fdp:.3f}  Power = {power:.3f} "
          f"(|selected| = {len(sel)}, target q = {report.q})")
print("\nthe lag-1 ground truth also counts taxa reached indirectly through "
      "the autoregressive matrix, so the larger lag-1 selection is still "
      "false-discovery free")
