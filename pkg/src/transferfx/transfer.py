"""Transfer-function models: per-taxon boosted ensembles over lagged
features, recursive multi-step forecasting, hypothetical intervention
scenarios, and counterfactual trajectory differences.

Forecasting convention: with observations through time index t, the step-h
prediction targets index t+h. Lagged abundance features read observed values
for indices <= t and previously predicted values beyond; intervention
features read the observed matrix for indices <= t and the scenario for the
forecast window. Predictions feed back raw -- no rounding or clipping -- so
counterfactual differences stay exactly antisymmetric.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ValidationError
from .gbrt import BoostConfig, TreeEnsemble, fit as fit_ensemble
from .ts_core import InterventionSeriesSet, SubjectSeries, segment_table

MODEL_FORMAT = "transferfx-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class InterventionScenario:
    """Hypothetical intervention values over a forecast window (D x H)."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValidationError(f"scenario values must be D x H with H >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("scenario values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def horizon(self) -> int:
        return self.values.shape[1]


class TransferModel:
    """J fitted per-taxon ensembles plus the lag orders and data metadata."""

    def __init__(self, P, Q, ensembles, taxa_names, intervention_names,
                 covariate_names, scale_tag, boost_config):
        self.P = int(P)
        self.Q = int(Q)
        self.ensembles = tuple(ensembles)
        self.taxa_names = tuple(taxa_names)
        self.intervention_names = tuple(intervention_names)
        self.covariate_names = tuple(covariate_names)
        self.scale_tag = scale_tag
        self.boost_config = boost_config
        F = self.P * len(self.taxa_names) + self.Q * len(self.intervention_names) \
            + len(self.covariate_names)
        for e in self.ensembles:
            if e.n_features != F:
                raise ValidationError(
                    f"ensemble feature width {e.n_features} does not match "
                    f"P*J + Q*D + S = {F}"
                )

    @property
    def n_taxa(self) -> int:
        return len(self.taxa_names)

    @property
    def n_channels(self) -> int:
        return len(self.intervention_names)

    def to_json(self) -> dict:
        from dataclasses import asdict
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "P": self.P,
            "Q": self.Q,
            "taxa_names": list(self.taxa_names),
            "intervention_names": list(self.intervention_names),
            "covariate_names": list(self.covariate_names),
            "scale_tag": self.scale_tag,
            "boost_config": asdict(self.boost_config),
            "ensembles": [e.to_json() for e in self.ensembles],
        }

    @staticmethod
    def from_json(doc: dict) -> "TransferModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ValidationError(f"not a model document: format={doc.get('format')!r}")
        if doc.get("version") != MODEL_VERSION:
            raise ValidationError(f"unsupported model version {doc.get('version')!r}")
        return TransferModel(doc["P"], doc["Q"],
                             [TreeEnsemble.from_json(e) for e in doc["ensembles"]],
                             doc["taxa_names"], doc["intervention_names"],
                             doc["covariate_names"], doc["scale_tag"],
                             BoostConfig(**doc["boost_config"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path) -> "TransferModel":
        with open(path) as fh:
            return TransferModel.from_json(json.load(fh))


def fit_transfer(sset: InterventionSeriesSet, P: int, Q: int,
                 config: BoostConfig = BoostConfig(),
                 threads: int | None = None) -> TransferModel:
    """Fit one ensemble per taxon on the shared lagged-feature table.

    Each taxon's learner is seeded with config.seed XOR taxon index, so
    results are identical for any thread count or subject order.
    """
    X, Y, _, _ = segment_table(sset, P, Q)
    J = sset.n_taxa

    def fit_one(j):
        return fit_ensemble(X, Y[:, j], config.with_seed(config.seed ^ j))

    n_workers = threads if threads is not None else (os.cpu_count() or 1)
    if n_workers > 1 and J > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            ensembles = list(ex.map(fit_one, range(J)))
    else:
        ensembles = [fit_one(j) for j in range(J)]
    return TransferModel(P, Q, ensembles, sset.taxa_names,
                         sset.intervention_names, sset.covariate_names,
                         sset.scale_tag, config)


def _check_subject(model: TransferModel, subject: SubjectSeries):
    if subject.n_taxa != model.n_taxa:
        raise ValidationError(
            f"subject {subject.subject_id} has {subject.n_taxa} taxa, model expects {model.n_taxa}"
        )
    if subject.n_channels != model.n_channels:
        raise ValidationError(
            f"subject {subject.subject_id} has {subject.n_channels} intervention "
            f"channels, model expects {model.n_channels}"
        )
    if subject.n_covariates != len(model.covariate_names):
        raise ValidationError(
            f"subject {subject.subject_id} has {subject.n_covariates} covariates, "
            f"model expects {len(model.covariate_names)}"
        )


def forecast(model: TransferModel, subject: SubjectSeries, H: int,
             scenario: InterventionScenario | None = None,
             clamp_nonnegative: bool = False) -> np.ndarray:
    """Recursive h-step forecast (J x H) from the subject's observed prefix.

    Intervention values for future indices come from the scenario when one
    is given, otherwise from the subject's retained intervention matrix.
    clamp_nonnegative floors the RETURNED values at zero for counts-scale
    reporting; the recursion itself always feeds back raw predictions.
    """
    _check_subject(model, subject)
    if H < 1:
        raise ValidationError(f"forecast horizon must be >= 1, got {H}")
    t = subject.n_observed - 1
    if subject.n_observed < model.P:
        raise DataError(
            f"subject {subject.subject_id}: history of length {subject.n_observed} "
            f"is shorter than P={model.P}"
        )
    if scenario is not None:
        if scenario.values.shape[0] != model.n_channels:
            raise ValidationError(
                f"scenario has {scenario.values.shape[0]} channels, model expects {model.n_channels}"
            )
        if scenario.horizon < H:
            raise ValidationError(
                f"scenario horizon {scenario.horizon} is shorter than requested H={H}"
            )
    elif subject.n_times < subject.n_observed + H:
        raise DataError(
            f"subject {subject.subject_id}: no scenario given and observed "
            f"interventions end at index {subject.n_times - 1} < {t + H}"
        )

    J, P, Q, D = model.n_taxa, model.P, model.Q, model.n_channels
    S = subject.n_covariates
    work = np.empty((J, subject.n_observed + H))
    work[:, :subject.n_observed] = subject.abundances

    def w_at(time_index):
        if time_index <= t:
            return subject.interventions[:, max(time_index, 0)]
        if scenario is not None:
            return scenario.values[:, time_index - t - 1]
        return subject.interventions[:, time_index]

    row = np.empty(P * J + Q * D + S)
    for h in range(1, H + 1):
        tau = t + h
        pos = 0
        for p in range(1, P + 1):
            row[pos:pos + J] = work[:, tau - p]
            pos += J
        for k in range(Q):
            row[pos:pos + D] = w_at(tau - k)
            pos += D
        row[pos:pos + S] = subject.covariates
        X = row.reshape(1, -1)
        for j in range(J):
            work[j, tau] = model.ensembles[j].predict(X)[0]
    out = work[:, subject.n_observed:].copy()
    if clamp_nonnegative:
        np.maximum(out, 0.0, out=out)
    return out


def steps(active_channels, starts, lengths, L: int, intervention_names):
    """Step-pulse scenarios: for every (start, length) combination, a D x L
    matrix with the named channels set to 1 on columns start..start+length-1
    (1-based start) and 0 elsewhere."""
    names = list(intervention_names)
    if isinstance(active_channels, dict):
        active = [n for n, on in active_channels.items() if on]
    elif isinstance(active_channels, str):
        active = [active_channels]
    else:
        active = list(active_channels)
    unknown = [n for n in active if n not in names]
    if unknown:
        raise ValidationError(f"unknown intervention channel(s) {unknown}; have {names}")
    starts = [int(s) for s in (starts if np.iterable(starts) else [starts])]
    lengths = [int(l) for l in (lengths if np.iterable(lengths) else [lengths])]
    if L < 1:
        raise ValidationError(f"window length L must be >= 1, got {L}")
    out = []
    for s in starts:
        if s < 1:
            raise ValidationError(f"starts are 1-based, got {s}")
        for l in lengths:
            if l < 1 or s + l - 1 > L:
                raise ValidationError(
                    f"step start={s}, length={l} does not fit in a window of L={L}"
                )
            v = np.zeros((len(names), L))
            for name in active:
                v[names.index(name), s - 1:s - 1 + l] = 1.0
            out.append(InterventionScenario(v, label=f"start={s},length={l}"))
    return out


def first_onset_index(subject: SubjectSeries) -> int:
    """Index of the first timepoint with any nonzero intervention value."""
    nz = np.nonzero(np.any(subject.interventions != 0.0, axis=0))[0]
    if nz.size == 0:
        raise DataError(f"subject {subject.subject_id} has no intervention onset")
    return int(nz[0])


def _resolve_anchor(subject: SubjectSeries, anchor) -> int:
    if anchor is None:
        return first_onset_index(subject)
    if isinstance(anchor, dict):
        return int(anchor[subject.subject_id])
    return int(anchor)


def counterfactual_difference(model: TransferModel, sset: InterventionSeriesSet,
                              scenario_a: InterventionScenario,
                              scenario_b: InterventionScenario,
                              H: int, anchor=None) -> dict:
    """Per-subject J x H matrices of forecast(scenario_a) - forecast(scenario_b).

    Both forecasts share the history before the anchor (default: the
    subject's first intervention onset); the scenario window starts AT the
    anchor, so the onset itself is toggleable.
    """
    if scenario_a.values.shape != scenario_b.values.shape:
        raise ValidationError(
            f"scenarios must share a shape, got {scenario_a.values.shape} "
            f"vs {scenario_b.values.shape}"
        )
    out = {}
    for subject in sset.subjects:
        a = _resolve_anchor(subject, anchor)
        if a < model.P:
            raise DataError(
                f"subject {subject.subject_id}: anchor {a} leaves fewer than "
                f"P={model.P} observed timepoints of history"
            )
        hist = subject.truncated(a)
        ya = forecast(model, hist, H, scenario_a)
        yb = forecast(model, hist, H, scenario_b)
        out[subject.subject_id] = ya - yb
    return out


def _median_of_halves(values: np.ndarray):
    """(median, Q1, Q3) with quartiles as medians of the lower/upper halves,
    excluding the central element when the count is odd."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    med = float(np.median(v))
    if n == 1:
        return med, med, med
    lower = v[: n // 2]
    upper = v[(n + 1) // 2:]
    return med, float(np.median(lower)), float(np.median(upper))


def counterfactual_summary(differences: dict):
    """Across-subject {median, q1, q3} per (taxon, horizon).

    Returns arrays of shape (J, H) keyed 'median', 'q1', 'q3'.
    """
    if not differences:
        raise ValidationError("need at least one subject's differences")
    stack = np.stack(list(differences.values()))  # (n_subjects, J, H)
    J, H = stack.shape[1], stack.shape[2]
    med = np.empty((J, H))
    q1 = np.empty((J, H))
    q3 = np.empty((J, H))
    for j in range(J):
        for h in range(H):
            med[j, h], q1[j, h], q3[j, h] = _median_of_halves(stack[:, j, h])
    return {"median": med, "q1": q1, "q3": q3}
