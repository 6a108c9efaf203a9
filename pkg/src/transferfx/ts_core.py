"""Interventioned time-series containers, CSV ingest/export, interpolation,
and training-segment extraction.

Data model
----------
A study is a collection of subjects observed on per-subject time grids. Each
subject carries three aligned pieces: a taxa x time abundance matrix, a
channels x time intervention matrix, and a static covariate vector. The
collection fixes shared taxon / channel / covariate orderings and a scale tag
recording which transformation the abundances currently live on.

Abundances may be truncated to a prefix of the grid (see subset_values); the
intervention matrix always keeps the full grid so later forecasting can read
future intervention values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError, ValidationError

SCALE_COUNTS = "counts"
SCALE_NORMALIZED = "normalized"
SCALE_NORMALIZED_ASINH = "normalized_asinh"
SCALE_TAGS = (SCALE_COUNTS, SCALE_NORMALIZED, SCALE_NORMALIZED_ASINH)


def _freeze(a):
    a = np.asarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def format_value(x, integral: bool) -> str:
    """Serialize one cell; 17 significant digits round-trip float64 exactly."""
    if integral:
        return str(int(round(float(x))))
    return "%.17g" % float(x)


@dataclass(frozen=True)
class SubjectSeries:
    """One subject's aligned abundance / intervention / covariate data."""

    subject_id: str
    times: np.ndarray        # (T,) strictly increasing
    abundances: np.ndarray   # (J, T_obs) with T_obs <= T
    interventions: np.ndarray  # (D, T)
    covariates: np.ndarray   # (S,)

    def __post_init__(self):
        object.__setattr__(self, "times", _freeze(self.times))
        object.__setattr__(self, "abundances", _freeze(self.abundances))
        object.__setattr__(self, "interventions", _freeze(self.interventions))
        object.__setattr__(self, "covariates", _freeze(self.covariates))
        t = self.times
        if t.ndim != 1 or t.size == 0:
            raise ValidationError(f"subject {self.subject_id}: times must be a nonempty 1-d array")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise DataError(f"subject {self.subject_id}: times must be strictly increasing")
        if self.abundances.ndim != 2 or self.interventions.ndim != 2:
            raise ValidationError(f"subject {self.subject_id}: abundances and interventions must be 2-d")
        T = t.size
        if self.interventions.shape[1] != T:
            raise DataError(
                f"subject {self.subject_id}: interventions have {self.interventions.shape[1]} "
                f"columns but there are {T} timepoints"
            )
        if self.abundances.shape[1] > T:
            raise DataError(
                f"subject {self.subject_id}: abundances have {self.abundances.shape[1]} "
                f"columns but there are only {T} timepoints"
            )
        if self.covariates.ndim != 1:
            raise ValidationError(f"subject {self.subject_id}: covariates must be 1-d")
        for name, arr in (("abundances", self.abundances),
                          ("interventions", self.interventions),
                          ("covariates", self.covariates)):
            if arr.size and not np.all(np.isfinite(arr)):
                raise DataError(f"subject {self.subject_id}: non-finite value in {name}")

    @property
    def n_taxa(self) -> int:
        return self.abundances.shape[0]

    @property
    def n_channels(self) -> int:
        return self.interventions.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def n_observed(self) -> int:
        """Number of timepoints with observed abundances (prefix length)."""
        return self.abundances.shape[1]

    def truncated(self, n_observed: int) -> "SubjectSeries":
        return SubjectSeries(self.subject_id, self.times,
                             self.abundances[:, :n_observed],
                             self.interventions, self.covariates)


@dataclass(frozen=True)
class InterventionSeriesSet:
    """Ordered subjects plus shared names and the current abundance scale."""

    subjects: tuple
    taxa_names: tuple
    intervention_names: tuple
    covariate_names: tuple
    scale_tag: str = SCALE_COUNTS

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "taxa_names", tuple(self.taxa_names))
        object.__setattr__(self, "intervention_names", tuple(self.intervention_names))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if self.scale_tag not in SCALE_TAGS:
            raise ValidationError(f"unknown scale_tag {self.scale_tag!r}; expected one of {SCALE_TAGS}")
        if not self.subjects:
            raise ValidationError("a series set needs at least one subject")
        J, D, S = len(self.taxa_names), len(self.intervention_names), len(self.covariate_names)
        ids = set()
        for s in self.subjects:
            if s.n_taxa != J or s.n_channels != D or s.n_covariates != S:
                raise DataError(
                    f"subject {s.subject_id}: shape ({s.n_taxa} taxa, {s.n_channels} channels, "
                    f"{s.n_covariates} covariates) does not match the set ({J}, {D}, {S})"
                )
            if s.subject_id in ids:
                raise DataError(f"duplicate subject id {s.subject_id}")
            ids.add(s.subject_id)
            if self.scale_tag == SCALE_COUNTS and s.abundances.size and s.abundances.min() < 0:
                raise DataError(f"subject {s.subject_id}: negative abundance on counts scale")

    @property
    def n_taxa(self) -> int:
        return len(self.taxa_names)

    @property
    def n_channels(self) -> int:
        return len(self.intervention_names)

    @property
    def n_covariates(self) -> int:
        return len(self.covariate_names)

    @property
    def subject_ids(self) -> tuple:
        return tuple(s.subject_id for s in self.subjects)

    def subject(self, subject_id: str) -> SubjectSeries:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise ValidationError(f"unknown subject id {subject_id}")

    def restrict_subjects(self, subject_ids) -> "InterventionSeriesSet":
        wanted = list(subject_ids)
        missing = set(wanted) - set(self.subject_ids)
        if missing:
            raise ValidationError(f"unknown subject ids {sorted(missing)}")
        by_id = {s.subject_id: s for s in self.subjects}
        return InterventionSeriesSet(tuple(by_id[i] for i in wanted),
                                     self.taxa_names, self.intervention_names,
                                     self.covariate_names, self.scale_tag)

    def with_scale(self, subjects, scale_tag) -> "InterventionSeriesSet":
        return InterventionSeriesSet(tuple(subjects), self.taxa_names,
                                     self.intervention_names, self.covariate_names,
                                     scale_tag)


@dataclass(frozen=True)
class TrainingSegment:
    """One supervised example: lagged features for one taxon's next value."""

    features: np.ndarray   # (P*J + Q*D + S,)
    target_taxon: int
    target_value: float
    subject_id: str
    target_time_index: int

    def __post_init__(self):
        object.__setattr__(self, "features", _freeze(self.features))


def segment_anchor_indices(n_observed: int, P: int):
    """Target time indices, walking backward from the last timepoint in
    strides of P so consecutive targets' lag windows do not overlap."""
    out = []
    tau = n_observed - 1
    while tau >= P:
        out.append(tau)
        tau -= P
    return out


def lagged_feature_row(subject: SubjectSeries, tau: int, P: int, Q: int,
                       out=None) -> np.ndarray:
    """Feature vector for target time tau: P abundance lags (most recent
    first), Q intervention values at times tau..tau-Q+1 (clamped to the first
    observed value below index 0), then covariates."""
    J = subject.n_taxa
    D = subject.n_channels
    S = subject.n_covariates
    if out is None:
        out = np.empty(P * J + Q * D + S)
    pos = 0
    for p in range(1, P + 1):
        out[pos:pos + J] = subject.abundances[:, tau - p]
        pos += J
    for k in range(Q):
        t = tau - k
        out[pos:pos + D] = subject.interventions[:, t if t >= 0 else 0]
        pos += D
    out[pos:pos + S] = subject.covariates
    return out


def segment_table(sset: InterventionSeriesSet, P: int, Q: int):
    """Dense segment layout shared across taxa.

    Returns (features, targets, subject_ids, target_time_indices) where
    features is R x (P*J + Q*D + S) and targets is R x J; row r of targets
    holds every taxon's value at that row's target time. All J per-taxon
    training problems share the feature matrix.
    """
    if P < 1 or Q < 1:
        raise ValidationError(f"lag orders must be >= 1, got P={P}, Q={Q}")
    for s in sset.subjects:
        if s.n_observed < P + 1:
            raise DataError(
                f"subject {s.subject_id}: {s.n_observed} observed timepoints "
                f"is too short for P={P} (need at least {P + 1})"
            )
    J = sset.n_taxa
    F = P * J + Q * sset.n_channels + sset.n_covariates
    rows, targs, sids, taus = [], [], [], []
    for s in sset.subjects:
        for tau in segment_anchor_indices(s.n_observed, P):
            rows.append(lagged_feature_row(s, tau, P, Q))
            targs.append(s.abundances[:, tau])
            sids.append(s.subject_id)
            taus.append(tau)
    features = np.vstack(rows).reshape(len(rows), F)
    targets = np.vstack(targs)
    return features, targets, tuple(sids), tuple(taus)


def extract_segments(sset: InterventionSeriesSet, P: int, Q: int):
    """Per-taxon training segments (one TrainingSegment per taxon per anchor)."""
    features, targets, sids, taus = segment_table(sset, P, Q)
    out = []
    for r in range(features.shape[0]):
        for j in range(sset.n_taxa):
            out.append(TrainingSegment(features[r], j, float(targets[r, j]),
                                       sids[r], taus[r]))
    return out


def interpolate(sset: InterventionSeriesSet, delta: float,
                method: str = "linear") -> InterventionSeriesSet:
    """Resample every subject onto the even grid t_min, t_min+delta, ...,
    <= t_max; abundances and interventions interpolated channel-wise, values
    at original knots reproduced exactly, no extrapolation."""
    if method != "linear":
        raise ValidationError(f"unsupported interpolation method {method!r}")
    if not delta > 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    new_subjects = []
    for s in sset.subjects:
        if s.n_times < 2:
            raise DataError(f"subject {s.subject_id}: interpolation needs >= 2 timepoints")
        if s.n_observed != s.n_times:
            raise DataError(f"subject {s.subject_id}: cannot interpolate a truncated subject")
        t0, t1 = float(s.times[0]), float(s.times[-1])
        # grid points t0 + k*delta; tolerate rounding when (t1-t0)/delta is integral
        n = int(np.floor((t1 - t0) / delta + 1e-9)) + 1
        grid = t0 + delta * np.arange(n)
        grid = grid[grid <= t1 + delta * 1e-9]
        grid[np.abs(grid - t1) <= delta * 1e-9] = t1
        exact = np.searchsorted(grid, s.times)
        # snap grid points that coincide with knots so values reproduce bitwise
        for idx, tk in zip(exact, s.times):
            if idx < grid.size and abs(grid[idx] - tk) <= delta * 1e-9:
                grid[idx] = tk
        ab = np.empty((s.n_taxa, grid.size))
        for j in range(s.n_taxa):
            ab[j] = np.interp(grid, s.times, s.abundances[j])
        iv = np.empty((s.n_channels, grid.size))
        for d in range(s.n_channels):
            iv[d] = np.interp(grid, s.times, s.interventions[d])
        new_subjects.append(SubjectSeries(s.subject_id, grid, ab, iv, s.covariates))
    return sset.with_scale(new_subjects, sset.scale_tag)


def subset_values(sset: InterventionSeriesSet, time_indices) -> InterventionSeriesSet:
    """Truncate abundances to an observed prefix of the grid; interventions
    (and times) keep full length so forecasting can fill in the remainder.

    time_indices must be the contiguous prefix 0..k-1 of the grid; revealing
    an arbitrary subset would break the lag structure.
    """
    idx = sorted(int(i) for i in time_indices)
    if not idx:
        raise ValidationError("time_indices must be nonempty")
    for s in sset.subjects:
        if idx[-1] >= s.n_observed:
            raise ValidationError(
                f"time index {idx[-1]} out of range for subject {s.subject_id} "
                f"({s.n_observed} observed timepoints)"
            )
    if idx != list(range(len(idx))):
        raise ValidationError("time_indices must be the contiguous prefix 0..k-1")
    k = len(idx)
    return sset.with_scale((s.truncated(k) for s in sset.subjects), sset.scale_tag)


# ---------------------------------------------------------------------------
# CSV ingest / export.
#
# reads.csv          taxon, <sample id> ...      (cells: abundance values)
# samples.csv        sample, subject, time
# interventions.csv  sample, <channel name> ...
# subjects.csv       subject, <covariate name> ...
# ---------------------------------------------------------------------------

def _numeric(df: pd.DataFrame, cols, fname: str) -> np.ndarray:
    # numpy's parser is correctly rounded; pandas' to_numeric is not, which
    # would break bitwise CSV round-trips
    raw = df[cols].to_numpy(dtype=object)
    try:
        return raw.astype(np.float64)
    except (TypeError, ValueError):
        for r in range(raw.shape[0]):
            for c in range(raw.shape[1]):
                try:
                    np.float64(raw[r, c])
                except (TypeError, ValueError):
                    raise DataError(
                        f"{fname}: non-numeric cell {raw[r, c]!r} at row {r}, "
                        f"column {cols[c]!r}"
                    ) from None
        raise DataError(f"{fname}: non-numeric cell")


def ingest(reads_path, interventions_path, samples_path, subjects_path,
           scale_tag: str = SCALE_COUNTS) -> InterventionSeriesSet:
    """Assemble a series set from the four documented CSV files."""
    reads = pd.read_csv(reads_path, dtype=str)
    samples = pd.read_csv(samples_path, dtype=str)
    interv = pd.read_csv(interventions_path, dtype=str)
    subjects = pd.read_csv(subjects_path, dtype=str)

    for fname, df, required in (("samples.csv", samples, ["sample", "subject", "time"]),
                                ("interventions.csv", interv, ["sample"]),
                                ("subjects.csv", subjects, ["subject"]),
                                ("reads.csv", reads, ["taxon"])):
        for col in required:
            if col not in df.columns:
                raise DataError(f"{fname}: missing required column {col!r}")

    taxa = list(reads["taxon"])
    if len(set(taxa)) != len(taxa):
        dup = next(t for t in taxa if taxa.count(t) > 1)
        raise DataError(f"reads.csv: duplicate taxon row {dup!r}")
    sample_cols = [c for c in reads.columns if c != "taxon"]
    read_vals = _numeric(reads, sample_cols, "reads.csv")
    reads_by_sample = {sid: read_vals[:, k] for k, sid in enumerate(sample_cols)}

    channel_names = [c for c in interv.columns if c != "sample"]
    interv_vals = _numeric(interv, channel_names, "interventions.csv") if channel_names \
        else np.empty((len(interv), 0))
    interv_by_sample = {}
    for k, sid in enumerate(interv["sample"]):
        if sid in interv_by_sample:
            raise DataError(f"interventions.csv: duplicate sample {sid!r}")
        interv_by_sample[sid] = interv_vals[k]

    covariate_names = [c for c in subjects.columns if c != "subject"]
    cov_vals = _numeric(subjects, covariate_names, "subjects.csv") if covariate_names \
        else np.empty((len(subjects), 0))
    cov_by_subject = {}
    for k, sid in enumerate(subjects["subject"]):
        if sid in cov_by_subject:
            raise DataError(f"subjects.csv: duplicate subject {sid!r}")
        cov_by_subject[sid] = cov_vals[k]

    times = _numeric(samples, ["time"], "samples.csv")[:, 0]
    per_subject = {}
    seen_pairs = set()
    order = []
    for k, row in enumerate(samples.itertuples(index=False)):
        sid, subj = row.sample, row.subject
        if sid not in reads_by_sample:
            raise DataError(f"samples.csv: sample {sid!r} is absent from reads.csv")
        if sid not in interv_by_sample:
            raise DataError(f"samples.csv: sample {sid!r} is absent from interventions.csv")
        if subj not in cov_by_subject:
            raise DataError(f"samples.csv: subject {subj!r} is absent from subjects.csv")
        key = (subj, float(times[k]))
        if key in seen_pairs:
            raise DataError(f"samples.csv: duplicate (subject, time) pair {key}")
        seen_pairs.add(key)
        if subj not in per_subject:
            per_subject[subj] = []
            order.append(subj)
        per_subject[subj].append((float(times[k]), sid))

    extra = set(reads_by_sample) - set(samples["sample"])
    if extra:
        raise DataError(f"reads.csv: sample {sorted(extra)[0]!r} is absent from samples.csv")

    subject_series = []
    for subj in order:
        entries = sorted(per_subject[subj])
        t = np.array([e[0] for e in entries])
        ab = np.column_stack([reads_by_sample[e[1]] for e in entries])
        iv = np.column_stack([interv_by_sample[e[1]] for e in entries]) \
            if channel_names else np.empty((0, len(entries)))
        subject_series.append(SubjectSeries(subj, t, ab, iv, cov_by_subject[subj]))
    return InterventionSeriesSet(tuple(subject_series), tuple(taxa),
                                 tuple(channel_names), tuple(covariate_names),
                                 scale_tag)


def export(sset: InterventionSeriesSet, out_dir) -> dict:
    """Write the four CSV files; returns {name: path}. Counts-scale abundances
    are written as integers, everything else with 17 significant digits."""
    os.makedirs(out_dir, exist_ok=True)
    integral = sset.scale_tag == SCALE_COUNTS
    sample_ids, subj_rows, interv_rows = [], [], []
    read_cols = []
    for s in sset.subjects:
        if s.n_observed != s.n_times:
            raise ValidationError("cannot export a truncated series set")
        for k in range(s.n_times):
            sid = f"{s.subject_id}.t{k}"
            sample_ids.append(sid)
            subj_rows.append((sid, s.subject_id, s.times[k]))
            interv_rows.append([sid] + [format_value(v, False) for v in s.interventions[:, k]])
            read_cols.append([format_value(v, integral) for v in s.abundances[:, k]])

    paths = {}

    def _write(name, header, rows):
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
        paths[name] = path

    _write("reads.csv", ["taxon"] + sample_ids,
           [[t] + [read_cols[k][j] for k in range(len(sample_ids))]
            for j, t in enumerate(sset.taxa_names)])
    _write("samples.csv", ["sample", "subject", "time"],
           [[sid, subj, format_value(t, False)] for sid, subj, t in subj_rows])
    _write("interventions.csv", ["sample"] + list(sset.intervention_names), interv_rows)
    _write("subjects.csv", ["subject"] + list(sset.covariate_names),
           [[s.subject_id] + [format_value(v, False) for v in s.covariates]
            for s in sset.subjects])
    return paths
