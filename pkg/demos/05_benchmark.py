"""Benchmarking forecasts and selections
=======================================

Two evaluation protocols ship with the package.

Forecasting: subject-level K-fold cross-validation. For each held-out
subject the series is revealed through its first intervention onset and the
model forecasts the next H points; errors are mean absolute deviations, with
a fence-trimmed variant that discards gross outliers (counts are heavy
tailed). Size factors and the asinh transform are always trained on the
training folds only and applied to the holdout against that reference.

Inference: selections are scored against the simulation ground truth as
empirical false discovery proportion and power.
"""

import numpy as np

from transferfx import (BoostConfig, SimConfig, cv_forecast_eval, fit_transfer,
                        inference_eval, select_taxa, simulate)
from transferfx.normalize import (MODE_NONE, MODE_SIZE_FACTOR_ASINH,
                                  apply_normalization, size_factors_auto)

print("=" * 72)
print("1. Simulated cohort")
print("=" * 72)

config = SimConfig(J=15, pi0=0.4, b=1.0, n_subjects=16, T=16, seed=2)
counts, truth = simulate(config)
print(f"J={config.J}, {config.n_subjects} subjects, T={config.T}, "
      f"{len(truth.J1)} affected taxa")


def recipe(train):
    return fit_transfer(train, P=2, Q=2,
                        config=BoostConfig(n_rounds=40, max_depth=2, seed=0))


print()
print("=" * 72)
print("2. Forecast cross-validation: transformed vs raw counts")
print("=" * 72)

for mode in (MODE_SIZE_FACTOR_ASINH, MODE_NONE):
    report = cv_forecast_eval(counts, recipe, n_folds=4, H=5,
                              normalization=mode, seed=0)
    by_method = {}
    for row in report.rows:
        by_method.setdefault(row["method"], []).append(row)
    print(f"\nnormalization = {mode}")
    print(f"{'method':>14} {'MAE':>10} {'trimmed':>10} {'folds won':>10}")
    transfer_mae = [r["mae"] for r in by_method["transfer"]]
    carry_mae = [r["mae"] for r in by_method["carry_forward"]]
    wins = sum(t < c for t, c in zip(transfer_mae, carry_mae))
    for method, rows in by_method.items():
        mae = float(np.mean([r["mae"] for r in rows]))
        trm = float(np.mean([r["mae_truncated"] for r in rows]))
        extra = f"{wins}/4 vs carry" if method == "transfer" else ""
        print(f"{method:>14} {mae:>10.4f} {trm:>10.4f} {extra:>14}")

print("\non the asinh scale the transfer model beats carrying the last value "
      "forward;\non raw counts a few huge spikes dominate the loss and the "
      "advantage collapses -- \nmodel the transformed scale.")

print()
print("=" * 72)
print("3. Selection quality at two effect sizes")
print("=" * 72)

print(f"{'effect b':>9} {'FDP(0)':>8} {'Power(0)':>9}  selected")
for b in (1.5, 0.5):
    cfg = SimConfig(J=15, pi0=0.4, b=b, n_subjects=16, T=16, seed=2)
    crt, tru = simulate(cfg)
    cohort = apply_normalization(crt, MODE_SIZE_FACTOR_ASINH,
                                 size_factors_auto(crt))
    rep = select_taxa(cohort, np.ones(1), np.zeros(1), recipe,
                      q=0.2, lags=(0,), n_splits=8, seed=3)
    sel = rep.selected_taxa_for_lag(0)
    fdp, power = inference_eval(sel, tru, 0)
    print(f"{b:>9.2f} {fdp:>8.3f} {power:>9.3f}  {sel}")
print("\nstronger interventions are easier to detect; the FDP stays at or "
      "below the q = 0.2 target either way")
