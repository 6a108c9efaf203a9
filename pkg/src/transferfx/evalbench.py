"""Cross-validated forecasting evaluation, naive baselines, and FDP/Power
scoring of selections against simulation truth.

The holdout protocol reveals each holdout subject's timepoints through its
first intervention onset and forecasts the remainder (up to H steps) with
access to the intervention series but not the abundances. MAE averages
absolute errors over taxa, horizons, and holdout subjects on the scale the
model was trained on; summaries are reported both raw and with errors above
Q3 + 3*IQR dropped (quantiles per numpy's linear interpolation).
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ValidationError
from .normalize import (MODE_NONE, MODES, apply_normalization,
                        size_factors_auto, size_factors_from_reference)
from .simgen import SimTruth, nonnull_sets
from .transfer import first_onset_index, forecast
from .ts_core import InterventionSeriesSet, SubjectSeries, format_value


def fold_assignments(subject_ids, n_folds: int, seed: int = 0):
    """Deterministic balanced folds: subjects ordered by a seeded stable hash
    of their id, then dealt round-robin. Returns a list of id tuples."""
    ids = list(subject_ids)
    if n_folds < 2 or n_folds > len(ids):
        raise ValidationError(
            f"n_folds must lie in [2, n_subjects={len(ids)}], got {n_folds}"
        )
    keyed = sorted((hashlib.sha256(f"{seed}|{sid}".encode()).hexdigest(), sid)
                   for sid in ids)
    folds = [[] for _ in range(n_folds)]
    for rank, (_, sid) in enumerate(keyed):
        folds[rank % n_folds].append(sid)
    return [tuple(f) for f in folds]


def carry_forward(history: SubjectSeries, H: int) -> np.ndarray:
    """Repeat the last observed abundance column for H horizons."""
    if history.n_observed < 1:
        raise ValidationError(f"subject {history.subject_id}: empty history")
    return np.tile(history.abundances[:, -1:], (1, H))


def global_mean(train_means: np.ndarray, H: int) -> np.ndarray:
    """Repeat per-taxon training means for H horizons."""
    m = np.asarray(train_means, dtype=np.float64)
    return np.tile(m[:, None], (1, H))


def training_means(sset: InterventionSeriesSet) -> np.ndarray:
    """Per-taxon mean over every observed cell of the training subjects."""
    total = np.zeros(sset.n_taxa)
    count = 0
    for s in sset.subjects:
        total += s.abundances.sum(axis=1)
        count += s.n_observed
    return total / count


@dataclass(frozen=True)
class EvalReport:
    """Fold x method MAE table plus per-stage wall-clock seconds."""

    rows: tuple   # dicts: fold, method, normalization, mae, mae_truncated, n_scored, seconds

    def mae(self, fold: int, method: str) -> float:
        for r in self.rows:
            if r["fold"] == fold and r["method"] == method:
                return r["mae"]
        raise ValidationError(f"no row for fold={fold}, method={method!r}")

    def export_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("fold,method,normalization,mae,mae_truncated,n_scored,seconds\n")
            for r in self.rows:
                fh.write(
                    f"{r['fold']},{r['method']},{r['normalization']},"
                    f"{format_value(r['mae'], False)},"
                    f"{format_value(r['mae_truncated'], False)},"
                    f"{r['n_scored']},{format_value(r['seconds'], False)}\n"
                )


def _truncated_mean(errors: np.ndarray) -> float:
    q1, q3 = np.quantile(errors, [0.25, 0.75])
    keep = errors <= q3 + 3.0 * (q3 - q1)
    return float(errors[keep].mean()) if keep.any() else float(errors.mean())


def cv_forecast_eval(sset: InterventionSeriesSet, fit_recipe,
                     n_folds: int = 4, H: int = 5,
                     normalization: str = MODE_NONE, seed: int = 0,
                     methods=("transfer", "carry_forward", "global_mean")) -> EvalReport:
    """K-fold holdout evaluation on counts-scale input.

    Normalization (when requested) is fitted on the training folds only; the
    holdout is scaled against the trained reference, so holdout abundances
    never influence the transform or the model.
    """
    if normalization not in MODES:
        raise ValidationError(f"unknown normalization {normalization!r}; expected one of {MODES}")
    if H < 1:
        raise ValidationError(f"H must be >= 1, got {H}")
    known = {"transfer", "carry_forward", "global_mean"}
    bad = set(methods) - known
    if bad:
        raise ValidationError(f"unknown methods {sorted(bad)}; expected among {sorted(known)}")
    folds = fold_assignments(sset.subject_ids, n_folds, seed)
    rows = []
    for k, hold_ids in enumerate(folds):
        hold_set = set(hold_ids)
        train = sset.restrict_subjects([i for i in sset.subject_ids if i not in hold_set])
        hold = sset.restrict_subjects(hold_ids)
        t0 = time.perf_counter()
        if normalization != MODE_NONE:
            sf = size_factors_auto(train)
            train = apply_normalization(train, normalization, sf)
            hold = apply_normalization(hold, normalization,
                                       size_factors_from_reference(hold, sf))
        model = fit_recipe(train) if "transfer" in methods else None
        fit_seconds = time.perf_counter() - t0
        means = training_means(train)
        errors = {m: [] for m in methods}
        t0 = time.perf_counter()
        for subj in hold.subjects:
            t_star = first_onset_index(subj)
            if model is not None and t_star + 1 < model.P:
                raise DataError(
                    f"subject {subj.subject_id}: onset at index {t_star} leaves "
                    f"fewer than P={model.P} revealed timepoints"
                )
            H_eff = min(H, subj.n_times - 1 - t_star)
            if H_eff < 1:
                raise DataError(
                    f"subject {subj.subject_id}: intervention onset at the last "
                    "timepoint leaves nothing to forecast"
                )
            revealed = subj.truncated(t_star + 1)
            future = subj.abundances[:, t_star + 1: t_star + 1 + H_eff]
            for m in methods:
                if m == "transfer":
                    pred = forecast(model, revealed, H_eff)
                elif m == "carry_forward":
                    pred = carry_forward(revealed, H_eff)
                else:
                    pred = global_mean(means, H_eff)
                errors[m].append(np.abs(pred - future).ravel())
        predict_seconds = time.perf_counter() - t0
        for m in methods:
            errs = np.concatenate(errors[m]) if errors[m] else np.empty(0)
            if errs.size == 0:
                raise DataError(f"fold {k}: no holdout errors to score")
            rows.append({
                "fold": k,
                "method": m,
                "normalization": normalization,
                "mae": float(errs.mean()),
                "mae_truncated": _truncated_mean(errs),
                "n_scored": int(errs.size),
                "seconds": fit_seconds + predict_seconds if m == "transfer" else predict_seconds,
            })
    return EvalReport(tuple(rows))


def inference_eval(selected, truth: SimTruth, h: int):
    """(FDP(h), Power(h)) of a selected taxon set against simulation truth."""
    j1_by_lag, j0_by_lag = nonnull_sets(truth, h)
    j1, j0 = set(j1_by_lag[h]), set(j0_by_lag[h])
    sel = set(int(j) for j in selected)
    fdp = len(sel & j0) / max(1, len(sel))
    power = len(sel & j1) / len(j1) if j1 else 0.0
    return fdp, power


def export_inference_csv(rows, path) -> None:
    """rows: dicts with keys lag, fdp, power, q, seed."""
    with open(path, "w") as fh:
        fh.write("lag,fdp,power,q,seed\n")
        for r in rows:
            fh.write(f"{r['lag']},{format_value(r['fdp'], False)},"
                     f"{format_value(r['power'], False)},"
                     f"{format_value(r['q'], False)},{r['seed']}\n")
