import numpy as np
import pytest

from transferfx import (BoostConfig, InterventionSeriesSet, SubjectSeries,
                        TransferModel)
from transferfx.gbrt import TreeEnsemble


def make_subject(subject_id="s0", J=3, T=8, D=1, S=1, seed=0, onset=3,
                 length=2, counts=True):
    """Small deterministic subject with a single step intervention."""
    rng = np.random.default_rng(seed)
    if counts:
        ab = rng.poisson(10.0, size=(J, T)).astype(np.float64)
    else:
        ab = rng.normal(0.0, 1.0, size=(J, T))
    w = np.zeros((D, T))
    if onset is not None:
        w[:, onset: onset + length] = 1.0
    z = rng.normal(0.0, 1.0, size=S)
    return SubjectSeries(subject_id, np.arange(T, dtype=np.float64), ab, w, z)


def make_set(n_subjects=4, J=3, T=8, D=1, S=1, seed=0, scale_tag="counts",
             onset=3, length=2):
    subjects = tuple(
        make_subject(f"s{i}", J=J, T=T, D=D, S=S, seed=seed + i, onset=onset,
                     length=length, counts=scale_tag == "counts")
        for i in range(n_subjects)
    )
    return InterventionSeriesSet(
        subjects,
        tuple(f"t{j}" for j in range(J)),
        tuple(f"w{d}" for d in range(D)),
        tuple(f"z{s}" for s in range(S)),
        scale_tag=scale_tag,
    )


def leaf(v):
    return {"value": float(v)}


def split(feature, threshold, left, right):
    return {"feature": int(feature), "threshold": float(threshold),
            "left": left, "right": right}


def stub_ensemble(trees, n_features, learning_rate=1.0, base_score=0.0):
    """Hand-built ensemble from nested node dicts (for oracle models)."""
    return TreeEnsemble.from_json({
        "format": "transferfx-ensemble",
        "version": 1,
        "base_score": float(base_score),
        "n_features": int(n_features),
        "config": {
            "n_rounds": len(trees), "learning_rate": float(learning_rate),
            "max_depth": 8, "min_samples_leaf": 1, "subsample_rows": 1.0,
            "seed": 0,
        },
        "train_mse": [],
        "trees": trees,
    })


def stub_model(sset, P, Q, trees_per_taxon, learning_rate=1.0):
    """TransferModel whose taxon j computes base + lr * sum of trees."""
    J, D, S = sset.n_taxa, sset.n_channels, sset.n_covariates
    F = P * J + Q * D + S
    ensembles = [stub_ensemble(trees, F, learning_rate)
                 for trees in trees_per_taxon]
    return TransferModel(P, Q, ensembles, sset.taxa_names,
                         sset.intervention_names, sset.covariate_names,
                         sset.scale_tag, BoostConfig())


@pytest.fixture
def small_set():
    return make_set()
