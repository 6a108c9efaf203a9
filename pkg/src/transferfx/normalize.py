"""Abundance scalings: none, median-of-ratios size factors, size factors
followed by asinh.

The size-factor reference is built by pooling every sample of every subject:
each taxon's reference is its geometric mean across samples, with taxa that
contain a zero anywhere excluded from the reference set (they are still
normalized). A sample's factor is the median ratio of its counts to the
reference over the included taxa, skipping taxa the sample itself has at
zero. The reference can be reused to compute factors for samples that were
not part of the original pool (holdout folds).

Zero-saturated data (every taxon has at least one zero) leaves the strict
reference empty; size_factors_positive_ratios covers that regime with the
positive-counts convention: geometric means over each taxon's positive
entries only. size_factors_auto picks between the two.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ValidationError
from .ts_core import (SCALE_COUNTS, SCALE_NORMALIZED, SCALE_NORMALIZED_ASINH,
                      InterventionSeriesSet, SubjectSeries, format_value)

log = logging.getLogger(__name__)

MODE_NONE = "none"
MODE_SIZE_FACTOR = "size_factor"
MODE_SIZE_FACTOR_ASINH = "size_factor_asinh"
MODES = (MODE_NONE, MODE_SIZE_FACTOR, MODE_SIZE_FACTOR_ASINH)


@dataclass(frozen=True)
class SizeFactors:
    """Per-sample scale estimates plus the reference they were computed against."""

    factors: dict                    # (subject_id, time_index) -> positive float
    reference_log_means: np.ndarray  # (J,), NaN for excluded taxa
    included: np.ndarray             # (J,) bool, taxa in the reference set

    def factor(self, subject_id: str, time_index: int) -> float:
        return self.factors[(subject_id, time_index)]


def _sample_columns(sset: InterventionSeriesSet):
    for s in sset.subjects:
        for k in range(s.n_observed):
            yield s.subject_id, k, s.abundances[:, k]


def size_factors_median_ratios(sset: InterventionSeriesSet) -> SizeFactors:
    """Median-of-ratios size factors pooled over all samples."""
    if sset.scale_tag != SCALE_COUNTS:
        raise ValidationError(
            f"size factors require counts-scale data, got scale_tag={sset.scale_tag!r}"
        )
    counts = np.column_stack([col for _, _, col in _sample_columns(sset)])
    included = np.all(counts > 0, axis=1)
    if not included.any():
        raise DataError(
            "no taxon has all-positive counts across samples; filter taxa first"
        )
    ref_log = np.full(sset.n_taxa, np.nan)
    ref_log[included] = np.mean(np.log(counts[included]), axis=1)
    factors = _factors_against_reference(sset, ref_log, included)
    return SizeFactors(factors, ref_log, included)


def size_factors_positive_ratios(sset: InterventionSeriesSet) -> SizeFactors:
    """Median-of-ratios with geometric means over positive entries only.

    Fallback for zero-saturated counts where no taxon survives the strict
    all-positive rule; each taxon with at least one positive count joins the
    reference, and each sample's median skips its own zeros.
    """
    if sset.scale_tag != SCALE_COUNTS:
        raise ValidationError(
            f"size factors require counts-scale data, got scale_tag={sset.scale_tag!r}"
        )
    counts = np.column_stack([col for _, _, col in _sample_columns(sset)])
    positive = counts > 0
    included = positive.any(axis=1)
    if not included.any():
        raise DataError("all counts are zero; size factors are undefined")
    logs = np.where(positive, np.log(np.where(positive, counts, 1.0)), 0.0)
    ref_log = np.full(sset.n_taxa, np.nan)
    ref_log[included] = logs[included].sum(axis=1) / positive[included].sum(axis=1)
    factors = _factors_against_reference(sset, ref_log, included)
    return SizeFactors(factors, ref_log, included)


def size_factors_auto(sset: InterventionSeriesSet) -> SizeFactors:
    """Strict median-of-ratios when some taxon is all-positive, otherwise the
    positive-counts fallback."""
    try:
        return size_factors_median_ratios(sset)
    except DataError:
        log.info("no all-positive taxon; falling back to positive-count reference")
        return size_factors_positive_ratios(sset)


def size_factors_from_reference(sset: InterventionSeriesSet,
                                reference: SizeFactors) -> SizeFactors:
    """Factors for new samples measured against an existing reference."""
    if sset.scale_tag != SCALE_COUNTS:
        raise ValidationError(
            f"size factors require counts-scale data, got scale_tag={sset.scale_tag!r}"
        )
    factors = _factors_against_reference(sset, reference.reference_log_means,
                                         reference.included)
    return SizeFactors(factors, reference.reference_log_means, reference.included)


def _factors_against_reference(sset, ref_log, included):
    ref = np.exp(ref_log[included])
    factors = {}
    for subject_id, k, col in _sample_columns(sset):
        counts = col[included]
        pos = counts > 0
        if not pos.any():
            raise DataError(
                f"sample ({subject_id}, t{k}) yields no positive count on any "
                "reference taxon; size factor undefined"
            )
        f = float(np.median(counts[pos] / ref[pos]))
        factors[(subject_id, k)] = f
    return factors


def apply_normalization(sset: InterventionSeriesSet, mode: str,
                        size_factors: SizeFactors | None = None) -> InterventionSeriesSet:
    """Return a retagged copy on the requested scale; mode 'none' is identity."""
    if mode not in MODES:
        raise ValidationError(f"unknown normalization mode {mode!r}; expected one of {MODES}")
    if mode == MODE_NONE:
        return sset
    if sset.scale_tag != SCALE_COUNTS:
        raise ValidationError(
            f"data already on scale {sset.scale_tag!r}; refusing double normalization"
        )
    if size_factors is None:
        size_factors = size_factors_median_ratios(sset)
    new_subjects = []
    for s in sset.subjects:
        f = np.array([size_factors.factor(s.subject_id, k) for k in range(s.n_observed)])
        ab = s.abundances / f
        if mode == MODE_SIZE_FACTOR_ASINH:
            ab = np.arcsinh(ab)
        new_subjects.append(SubjectSeries(s.subject_id, s.times, ab,
                                          s.interventions, s.covariates))
    tag = SCALE_NORMALIZED if mode == MODE_SIZE_FACTOR else SCALE_NORMALIZED_ASINH
    return sset.with_scale(new_subjects, tag)


def export_size_factors(sf: SizeFactors, path) -> None:
    """CSV with columns sample,factor; sample ids follow the subject.t<k> scheme."""
    with open(path, "w") as fh:
        fh.write("sample,factor\n")
        for (subject_id, k), v in sf.factors.items():
            fh.write(f"{subject_id}.t{k},{format_value(v, False)}\n")
