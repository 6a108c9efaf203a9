"""Data-splitting selective inference: partial-dependence effects, mirror
statistics, FDP-thresholded selection, and multi-split aggregation.

The procedure: subjects are split into two halves; a model fitted on each
half yields a per-taxon partial-dependence effect (mean prediction change
when the intervention window is toggled on vs off). The mirror statistic
sign(PD1*PD2)*(|PD1|+|PD2|) is symmetric around zero for null taxa, which
turns the negative tail into an estimate of false discoveries among the
positive tail. Mirrors from all requested forecast lags are pooled, one
(taxon, lag) unit each, thresholded per split, then aggregated over splits
by inclusion rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .transfer import InterventionScenario, TransferModel
from .ts_core import InterventionSeriesSet, format_value, segment_table


@dataclass(frozen=True)
class SplitPlan:
    """Per-split disjoint halves of the subject ids."""

    halves: tuple   # ((ids1, ids2), ...)
    seed: int
    n_splits: int

    def __post_init__(self):
        for a, b in self.halves:
            if set(a) & set(b):
                raise ValidationError("split halves must be disjoint")
            if abs(len(a) - len(b)) > 1:
                raise ValidationError("split halves must differ in size by at most 1")


def make_split_plan(subject_ids, n_splits: int = 25, seed: int = 0) -> SplitPlan:
    ids = list(subject_ids)
    if len(ids) < 4:
        raise ValidationError(f"need at least 4 subjects to split, got {len(ids)}")
    if n_splits < 1:
        raise ValidationError(f"n_splits must be >= 1, got {n_splits}")
    rng = np.random.default_rng(seed)
    halves = []
    for _ in range(n_splits):
        perm = rng.permutation(len(ids))
        cut = len(ids) // 2
        halves.append((tuple(ids[i] for i in perm[:cut]),
                       tuple(ids[i] for i in perm[cut:])))
    return SplitPlan(tuple(halves), int(seed), int(n_splits))


def _scenario_matrix(scenario, n_channels: int) -> np.ndarray:
    """Normalize a scenario input to a D x W matrix; length-D vectors become
    constant (W=1) scenarios that broadcast over the whole window."""
    if isinstance(scenario, InterventionScenario):
        v = scenario.values
    else:
        v = np.asarray(scenario, dtype=np.float64)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
    if v.ndim != 2 or v.shape[0] != n_channels:
        raise ValidationError(
            f"scenario must be a length-{n_channels} vector or {n_channels} x W matrix, "
            f"got shape {np.asarray(scenario).shape}"
        )
    return v


def _scenario_column(values: np.ndarray, offset: int) -> np.ndarray:
    """Column at a forecast-window offset; offsets before the window clamp to
    the first column, and W=1 scenarios broadcast forward."""
    W = values.shape[1]
    if offset < 0:
        return values[:, 0]
    if offset >= W:
        if W == 1:
            return values[:, 0]
        raise ValidationError(
            f"scenario window of width {W} is shorter than the requested lag "
            f"(needs column {offset})"
        )
    return values[:, offset]


def partial_dependence(model: TransferModel, sset: InterventionSeriesSet,
                       scenario_on, scenario_off, h: int) -> np.ndarray:
    """Per-taxon mean difference of lag-h forecasts under the two scenarios.

    Every training segment of sset contributes one evaluation: its abundance
    history is kept fixed while the whole intervention-lag window is driven
    by the scenario (offset 0 at the segment's one-step target time). Lags
    h >= 1 recurse, feeding predictions back, exactly like forecast().
    """
    if h < 0:
        raise ValidationError(f"lag must be >= 0, got {h}")
    if not sset.subjects:
        raise ValidationError("empty split: no subjects to evaluate")
    on = _scenario_matrix(scenario_on, model.n_channels)
    off = _scenario_matrix(scenario_off, model.n_channels)
    X, _, _, _ = segment_table(sset, model.P, model.Q)
    return _pd_forecast(model, X, on, h) - _pd_forecast(model, X, off, h)


def _pd_forecast(model: TransferModel, X: np.ndarray, scenario: np.ndarray,
                 h: int) -> np.ndarray:
    """Mean lag-h prediction per taxon over segment rows X, with the
    intervention block rewritten from the scenario."""
    R = X.shape[0]
    J, P, Q, D = model.n_taxa, model.P, model.Q, model.n_channels
    S = X.shape[1] - P * J - Q * D
    # y history ring: columns 0..P-1 hold y_{tau-P}..y_{tau-1}
    ybuf = np.empty((J, P + h + 1, R))
    for p in range(1, P + 1):
        ybuf[:, P - p, :] = X[:, (p - 1) * J: p * J].T
    z_block = X[:, P * J + Q * D:]
    Xs = np.empty((R, X.shape[1]))
    Xs[:, P * J + Q * D:] = z_block
    for s in range(h + 1):
        for p in range(1, P + 1):
            Xs[:, (p - 1) * J: p * J] = ybuf[:, P + s - p, :].T
        for k in range(Q):
            Xs[:, P * J + k * D: P * J + (k + 1) * D] = _scenario_column(scenario, s - k)
        for j in range(J):
            ybuf[j, P + s, :] = model.ensembles[j].predict(Xs)
    return ybuf[:, P + h, :].mean(axis=1)


def mirror_statistics(pd1, pd2) -> np.ndarray:
    """sign(PD1*PD2) * (|PD1| + |PD2|), with sign(0) = 0."""
    a = np.asarray(pd1, dtype=np.float64)
    b = np.asarray(pd2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"PD vectors must share a shape, got {a.shape} vs {b.shape}")
    return np.sign(a * b) * (np.abs(a) + np.abs(b))


def fdp_estimate(M: np.ndarray, t: float) -> float:
    """#{M < -t} / max(1, #{M > t})."""
    M = np.asarray(M, dtype=np.float64)
    return float(np.sum(M < -t)) / max(1, int(np.sum(M > t)))


def fdp_threshold(M, q: float):
    """Smallest candidate threshold t in {|M_j|} u {0} with estimated FDP <= q
    and a nonempty selection; returns (t_star, selected index array).

    If no candidate qualifies, t_star = +inf and the selection is empty.
    """
    if not (0.0 < q < 1.0):
        raise ValidationError(f"q must lie in (0, 1), got {q}")
    M = np.asarray(M, dtype=np.float64)
    candidates = np.unique(np.concatenate([np.abs(M), [0.0]]))
    for t in candidates:
        selected = np.nonzero(M > t)[0]
        if selected.size == 0:
            continue
        if fdp_estimate(M, float(t)) <= q:
            return float(t), selected
    return float("inf"), np.empty(0, dtype=np.int64)


def multi_split_select(per_split_selected, n_units: int, q: float):
    """Aggregate per-split selections by inclusion rate.

    I_j = mean over splits of 1{j selected}/max(1, selection size); rates are
    sorted ascending and the largest prefix with cumulative sum <= q is
    excluded, except that the exclusion never splits a group of tied rates:
    units survive when I_j >= the smallest rate above the prefix. (With the
    strict reading a unanimous selection of |S| units would vanish entirely
    whenever q >= 1/|S|, since the prefix would eat into the tied group and
    the survivors must exceed their own rate.) Returns (selected index
    array, inclusion rates).
    """
    if not (0.0 < q < 1.0):
        raise ValidationError(f"q must lie in (0, 1), got {q}")
    splits = list(per_split_selected)
    if len(splits) < 2:
        raise ValidationError(f"need >= 2 splits to aggregate, got {len(splits)}")
    inclusion = np.zeros(n_units)
    for sel in splits:
        sel = np.asarray(list(sel), dtype=np.int64)
        if sel.size:
            inclusion[sel] += 1.0 / sel.size
    inclusion /= len(splits)
    order = np.argsort(inclusion, kind="stable")
    csum = np.cumsum(inclusion[order])
    ell = int(np.searchsorted(csum, q, side="right"))
    if ell >= n_units:
        return np.empty(0, dtype=np.int64), inclusion
    selected = np.nonzero(inclusion >= inclusion[order[ell]])[0]
    return selected, inclusion


@dataclass(frozen=True)
class MirrorReport:
    """Everything the selection produced, per split and aggregated.

    Pooled units are indexed u = lag_index * J + taxon, matching the order of
    `lags`; pd1/pd2/mirrors have shape (n_splits, n_lags, J).
    """

    q: float
    seed: int
    n_splits: int
    lags: tuple
    taxa_names: tuple
    pd1: np.ndarray
    pd2: np.ndarray
    mirrors: np.ndarray
    thresholds: tuple
    per_split_units: tuple
    inclusion_rates: np.ndarray     # (n_lags, J)
    selected_units: tuple
    selected_taxa: tuple            # taxon indices selected at ANY lag

    @property
    def n_taxa(self) -> int:
        return len(self.taxa_names)

    def selected_taxa_for_lag(self, h) -> tuple:
        if h not in self.lags:
            raise ValidationError(f"lag {h} was not evaluated; have {self.lags}")
        li = self.lags.index(h)
        J = self.n_taxa
        return tuple(sorted(u - li * J for u in self.selected_units
                            if li * J <= u < (li + 1) * J))

    def export_mirrors_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("split,taxon,lag,pd1,pd2,m\n")
            for s in range(self.n_splits):
                for li, h in enumerate(self.lags):
                    for j, name in enumerate(self.taxa_names):
                        fh.write(
                            f"{s},{name},{h},{format_value(self.pd1[s, li, j], False)},"
                            f"{format_value(self.pd2[s, li, j], False)},"
                            f"{format_value(self.mirrors[s, li, j], False)}\n"
                        )

    def export_selection_csv(self, path) -> None:
        selected = set(self.selected_units)
        with open(path, "w") as fh:
            fh.write("taxon,lag,inclusion_rate,selected\n")
            for li, h in enumerate(self.lags):
                for j, name in enumerate(self.taxa_names):
                    u = li * self.n_taxa + j
                    fh.write(
                        f"{name},{h},{format_value(self.inclusion_rates[li, j], False)},"
                        f"{int(u in selected)}\n"
                    )

    def export_metadata_json(self, path, extra: dict | None = None) -> None:
        doc = {
            "q": self.q,
            "seed": self.seed,
            "n_splits": self.n_splits,
            "lags": list(self.lags),
            "n_taxa": self.n_taxa,
            "selected_taxa": [self.taxa_names[j] for j in self.selected_taxa],
        }
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)


def select_taxa(sset: InterventionSeriesSet, scenario_on, scenario_off,
                fit_recipe, q: float = 0.2, lags=(0,), n_splits: int = 25,
                seed: int = 0) -> MirrorReport:
    """Full selection pipeline: split subjects, fit a model per half, form
    pooled (taxon, lag) mirrors, threshold per split, aggregate over splits.

    fit_recipe is a callable mapping a series set to a TransferModel; it owns
    the lag orders and boosting configuration.
    """
    lags = tuple(int(h) for h in lags)
    if not lags or any(h < 0 for h in lags):
        raise ValidationError(f"lags must be nonnegative and nonempty, got {lags}")
    if not (0.0 < q < 1.0):
        raise ValidationError(f"q must lie in (0, 1), got {q}")
    plan = make_split_plan(sset.subject_ids, n_splits, seed)
    J = sset.n_taxa
    n_lags = len(lags)
    n_units = n_lags * J
    pd1 = np.empty((n_splits, n_lags, J))
    pd2 = np.empty((n_splits, n_lags, J))
    mirrors = np.empty((n_splits, n_lags, J))
    thresholds = []
    per_split_units = []
    for s, (ids1, ids2) in enumerate(plan.halves):
        half1 = sset.restrict_subjects(ids1)
        half2 = sset.restrict_subjects(ids2)
        model1 = fit_recipe(half1)
        model2 = fit_recipe(half2)
        for li, h in enumerate(lags):
            pd1[s, li] = partial_dependence(model1, half1, scenario_on, scenario_off, h)
            pd2[s, li] = partial_dependence(model2, half2, scenario_on, scenario_off, h)
            mirrors[s, li] = mirror_statistics(pd1[s, li], pd2[s, li])
        t_star, sel = fdp_threshold(mirrors[s].reshape(n_units), q)
        thresholds.append(t_star)
        per_split_units.append(tuple(int(u) for u in sel))
    selected_units, inclusion = multi_split_select(per_split_units, n_units, q) \
        if n_splits >= 2 else (np.asarray(per_split_units[0], dtype=np.int64),
                               _single_split_rates(per_split_units[0], n_units))
    selected_taxa = tuple(sorted({int(u) % J for u in selected_units}))
    return MirrorReport(q=float(q), seed=int(seed), n_splits=int(n_splits),
                        lags=lags, taxa_names=sset.taxa_names,
                        pd1=pd1, pd2=pd2, mirrors=mirrors,
                        thresholds=tuple(thresholds),
                        per_split_units=tuple(per_split_units),
                        inclusion_rates=inclusion.reshape(n_lags, J),
                        selected_units=tuple(int(u) for u in selected_units),
                        selected_taxa=selected_taxa)


def _single_split_rates(selected, n_units):
    rates = np.zeros(n_units)
    sel = np.asarray(list(selected), dtype=np.int64)
    if sel.size:
        rates[sel] = 1.0 / sel.size
    return rates
