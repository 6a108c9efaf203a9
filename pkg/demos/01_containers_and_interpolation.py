"""Containers and interpolation
==============================

The package models a cohort as an InterventionSeriesSet: per subject an
aligned triple of taxon abundances (J x T), intervention channels (D x T)
and static covariates (S,), all on a shared time grid. Real studies sample
subjects irregularly, so the first step of every analysis is interpolation
onto an even grid; supervised training then slices each subject into
overlapping lagged segments.

This script builds a tiny two-subject cohort by hand, resamples it, and
prints the exact layout of the training features the models consume.
"""

import numpy as np

from transferfx import (InterventionSeriesSet, SubjectSeries,
                        extract_segments, interpolate, segment_table)

print("=" * 72)
print("1. An irregularly sampled cohort")
print("=" * 72)

# Subject A: sampled at uneven intervals; one antibiotic pulse at t in [3, 5].
times_a = np.array([0.0, 1.0, 2.5, 3.0, 4.5, 5.0, 7.0, 8.0])
pulse_a = ((times_a >= 3.0) & (times_a <= 5.0)).astype(float)[None, :]
abund_a = np.vstack([
    10.0 + 2.0 * np.sin(times_a),          # taxon that ignores the pulse
    8.0 * np.exp(-0.8 * pulse_a[0]) + times_a * 0.1,  # taxon knocked down by it
    np.linspace(5.0, 9.0, times_a.size),   # slow riser
])
subject_a = SubjectSeries("A", times_a, abund_a, pulse_a, np.array([0.4]))

# Subject B: denser sampling, pulse arrives later.
times_b = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 6.5, 7.5, 8.0])
pulse_b = ((times_b >= 5.0) & (times_b <= 7.5)).astype(float)[None, :]
abund_b = np.vstack([
    9.0 + 1.5 * np.cos(times_b),
    7.5 * np.exp(-0.8 * pulse_b[0]) + 0.2 * times_b,
    np.linspace(6.0, 8.0, times_b.size),
])
subject_b = SubjectSeries("B", times_b, abund_b, pulse_b, np.array([-1.1]))

cohort = InterventionSeriesSet(
    subjects=(subject_a, subject_b),
    taxa_names=("t_stable", "t_sensitive", "t_riser"),
    intervention_names=("antibiotic",),
    covariate_names=("host_score",),
)
for s in cohort.subjects:
    print(f"subject {s.subject_id}: {s.n_times} samples at "
          f"t = {np.array2string(s.times, precision=1)}")
print(f"scale tag: {cohort.scale_tag}")

print()
print("=" * 72)
print("2. Resampling onto an even grid (delta = 1.0)")
print("=" * 72)

even = interpolate(cohort, delta=1.0)
for s in even.subjects:
    print(f"subject {s.subject_id}: grid {np.array2string(s.times, precision=1)}")

# Values at original knots are reproduced exactly; in-between values are
# linear. t = 2.5 was a knot for A, so the abundance there is untouched:
a0 = cohort.subject("A").abundances[0]
e0 = even.subject("A").abundances[0]
print(f"A / t_stable at knot t=0:   raw {a0[0]:.6f}  resampled {e0[0]:.6f}")
print(f"A / t_stable at new  t=2.0: linear between t=1.0 ({a0[1]:.4f}) "
      f"and t=2.5 ({a0[2]:.4f}) -> {e0[2]:.4f}")

print()
print("=" * 72)
print("3. Training segments: the lagged feature layout")
print("=" * 72)

# With P abundance lags and Q intervention lags the feature vector for a
# target at time tau+1 is
#   [ y_tau (J), y_{tau-1} (J), ..., y_{tau-P+1} (J),      most recent first
#     w_{tau+1} (D), w_tau (D), ..., w_{tau-Q+2} (D),      target time first
#     z (S) ]
# Note the FIRST intervention block is the target-time value: the model is
# allowed to see the intervention applied while predicting its effect.
P, Q = 2, 2
segments = extract_segments(even, P=P, Q=Q)
X, Y, sids, taus = segment_table(even, P=P, Q=Q)
J, D, S = even.n_taxa, even.n_channels, even.n_covariates
print(f"P={P} abundance lags x {J} taxa, Q={Q} intervention lags x {D} "
      f"channel, {S} covariate -> {P * J + Q * D + S} features")
print(f"{len(segments)} segments from {X.shape[0]} table rows "
      f"(targets are all {J} taxa per row)")

r = next(i for i, (sid, tau) in enumerate(zip(sids, taus)) if sid == "A" and tau == 4)
print(f"\nrow for subject A, target time index 4 (t={even.subject('A').times[4]:.0f}):")
print(f"  y lags   : {np.array2string(X[r, :P * J], precision=3)}")
print(f"  w lags   : {X[r, P * J:P * J + Q * D]}  <- pulse active at target time")
print(f"  covariate: {X[r, P * J + Q * D:]}")
print(f"  targets  : {np.array2string(Y[r], precision=3)}")

one = segments[0]
print(f"\nTrainingSegment view: target_taxon={one.target_taxon} "
      f"subject={one.subject_id} target_time_index={one.target_time_index} "
      f"value={one.target_value:.3f}")
