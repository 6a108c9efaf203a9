"""Negative-binomial vector-autoregressive data generator with intervention
effects, host-covariate interactions, and ground-truth bookkeeping.

Latent log-mean recursion per subject:

    theta_t = sum_p A_p theta_{t-p} + sum_q (B_q + C_q * z) w_{t-q} + eps_t

with eps ~ N(0, sigma_eps^2 I) and counts y_tj ~ NB(mean=exp(theta_tj),
dispersion=phi_ij), variance mu + mu^2/phi, sampled as a Gamma-Poisson
mixture so the moments hold exactly. The shared autoregressive matrix is a
sparsified low-rank Gram matrix scaled to unit spectral norm, replicated
across lags as A_p = A / P_true for stability.

Taxa are split into a nonnull prefix J1 (rows of B and C drawn with
magnitudes in [b, 2b]) and a null suffix J0 of exactly floor(pi0 * J) taxa
whose rows are zero. Each subject gets one binary intervention pulse with a
random start in the middle third of the study and length in [L, 2L].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .ts_core import InterventionSeriesSet, SubjectSeries

TRUTH_FORMAT = "transferfx-truth"
TRUTH_VERSION = 1


@dataclass(frozen=True)
class SimConfig:
    J: int
    pi0: float
    b: float
    D: int = 1
    S: int = 1
    n_subjects: int = 50
    T: int = 30
    P_true: int = 3
    Q_true: int = 3
    p_c: float = 0.2
    p_A: float = 0.4
    K: int = 5
    sigma_eps: float = 0.1
    sigma_z: float = 1.0
    sigma_A: float = 1.0
    alpha: float = 2.0
    lam: float = 0.5
    L: int = 5
    theta_init_mean: float = math.log(10.0)
    theta_init_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.J < 1:
            raise ValidationError(f"J must be >= 1, got {self.J}")
        if not (0.0 <= self.pi0 <= 1.0):
            raise ValidationError(f"pi0 must lie in [0, 1], got {self.pi0}")
        if self.b < 0:
            raise ValidationError(f"b must be >= 0, got {self.b}")
        if self.D != 1 or self.S != 1:
            raise ValidationError("the generator is defined for D=1, S=1")
        for name in ("p_c", "p_A"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        for name in ("sigma_eps", "sigma_z", "sigma_A", "theta_init_sd"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.alpha <= 0 or self.lam <= 0:
            raise ValidationError("dispersion Gamma needs alpha > 0 and lam > 0")
        if self.n_subjects < 1 or self.T < 2 or self.P_true < 1 or self.Q_true < 1:
            raise ValidationError("need n_subjects >= 1, T >= 2, P_true >= 1, Q_true >= 1")
        if self.K < 1 or self.L < 1:
            raise ValidationError("need K >= 1 and L >= 1")
        if self.seed < 0:
            raise ValidationError(f"seed must be >= 0, got {self.seed}")

    def to_json(self) -> dict:
        from dataclasses import asdict
        return asdict(self)

    @staticmethod
    def from_json(doc: dict) -> "SimConfig":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        return SimConfig(**doc)


@dataclass(frozen=True)
class SimTruth:
    """Ground truth behind one simulated dataset."""

    A_base: np.ndarray      # (J, J), unit spectral norm (or zero)
    A_lags: tuple           # P_true matrices, each A_base / P_true
    B: tuple                # Q_true matrices (J, D); B[q] multiplies w_{t-(q+1)}
    C: tuple                # Q_true matrices (J, D), host interactions
    J0: tuple               # null taxon indices
    J1: tuple               # nonnull taxon indices
    c_null_rows: tuple      # nonnull taxa whose C rows were zeroed
    windows: dict           # subject_id -> (t_start, length)
    z: dict                 # subject_id -> (S,) covariates
    phi: dict               # subject_id -> (J,) dispersions
    config: SimConfig

    def to_json(self) -> dict:
        return {
            "format": TRUTH_FORMAT,
            "version": TRUTH_VERSION,
            "config": self.config.to_json(),
            "A_base": self.A_base.tolist(),
            "A_lags": [a.tolist() for a in self.A_lags],
            "B": [b.tolist() for b in self.B],
            "C": [c.tolist() for c in self.C],
            "J0": list(self.J0),
            "J1": list(self.J1),
            "c_null_rows": list(self.c_null_rows),
            "windows": {k: list(v) for k, v in self.windows.items()},
            "z": {k: list(map(float, v)) for k, v in self.z.items()},
            "phi": {k: list(map(float, v)) for k, v in self.phi.items()},
        }

    @staticmethod
    def from_json(doc: dict) -> "SimTruth":
        if doc.get("format") != TRUTH_FORMAT:
            raise ValidationError(f"not a truth document: format={doc.get('format')!r}")
        if doc.get("version") != TRUTH_VERSION:
            raise ValidationError(f"unsupported truth version {doc.get('version')!r}")
        return SimTruth(
            A_base=np.asarray(doc["A_base"], dtype=np.float64),
            A_lags=tuple(np.asarray(a, dtype=np.float64) for a in doc["A_lags"]),
            B=tuple(np.asarray(b, dtype=np.float64) for b in doc["B"]),
            C=tuple(np.asarray(c, dtype=np.float64) for c in doc["C"]),
            J0=tuple(doc["J0"]),
            J1=tuple(doc["J1"]),
            c_null_rows=tuple(doc["c_null_rows"]),
            windows={k: tuple(v) for k, v in doc["windows"].items()},
            z={k: np.asarray(v, dtype=np.float64) for k, v in doc["z"].items()},
            phi={k: np.asarray(v, dtype=np.float64) for k, v in doc["phi"].items()},
            config=SimConfig.from_json(doc["config"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path) -> "SimTruth":
        with open(path) as fh:
            return SimTruth.from_json(json.load(fh))


def _signed_magnitudes(rng, rows, cols, b):
    """Entries with |value| uniform on [b, 2b] and random sign."""
    mag = rng.uniform(b, 2.0 * b, size=(rows, cols))
    sign = np.where(rng.random((rows, cols)) < 0.5, 1.0, -1.0)
    return sign * mag


def nb_sample(rng, mu, phi):
    """NB(mean=mu, dispersion=phi) with variance mu + mu^2/phi, drawn as a
    Gamma(shape=phi, scale=mu/phi)-mixed Poisson."""
    return rng.poisson(rng.gamma(np.broadcast_to(phi, np.shape(mu)),
                                 np.asarray(mu) / phi))


def simulate(config: SimConfig):
    """Draw one dataset; returns (InterventionSeriesSet counts-scale, SimTruth)."""
    J, T, D = config.J, config.T, config.D
    master = np.random.SeedSequence(config.seed)
    streams = master.spawn(config.n_subjects + 1)
    g = np.random.default_rng(streams[0])

    # global structure; draw order is part of the reproducibility contract
    Qmat = g.normal(0.0, config.sigma_A, size=(J, config.K))
    A = Qmat @ Qmat.T
    A[g.random((J, J)) < config.p_A] = 0.0
    norm = np.linalg.norm(A, 2)
    if norm > 0:
        A = A / norm
    A_lags = tuple(A / config.P_true for _ in range(config.P_true))

    n_null = int(np.floor(config.pi0 * J))
    J1 = tuple(range(J - n_null))
    J0 = tuple(range(J - n_null, J))

    B, C = [], []
    for _ in range(config.Q_true):
        b_q = np.zeros((J, D))
        c_q = np.zeros((J, D))
        if J1:
            b_q[: len(J1)] = _signed_magnitudes(g, len(J1), D, config.b)
            c_q[: len(J1)] = _signed_magnitudes(g, len(J1), D, config.b)
        B.append(b_q)
        C.append(c_q)
    c_null_rows = tuple(j for j in J1 if g.random() < config.p_c)
    for c_q in C:
        for j in c_null_rows:
            c_q[j] = 0.0

    lo, hi = int(np.ceil(T / 3)), int(np.floor(2 * T / 3))
    times = np.arange(T, dtype=np.float64)
    subjects, windows, zs, phis = [], {}, {}, {}
    for i in range(config.n_subjects):
        rng = np.random.default_rng(streams[i + 1])
        sid = f"s{i:04d}"
        z = rng.normal(0.0, config.sigma_z, size=config.S)
        phi = rng.gamma(config.alpha, 1.0 / config.lam, size=J)
        t_start = int(rng.integers(lo, hi + 1))
        length = int(rng.integers(config.L, 2 * config.L + 1))
        w = np.zeros((D, T))
        w[0, t_start: min(t_start + length, T)] = 1.0

        theta = np.empty((J, config.P_true + T))
        theta[:, : config.P_true] = rng.normal(config.theta_init_mean,
                                               config.theta_init_sd,
                                               size=(J, config.P_true))
        eps = rng.normal(0.0, config.sigma_eps, size=(J, T))
        effect = np.column_stack([(B[q] + C[q] * z[0]).sum(axis=1)
                                  for q in range(config.Q_true)])  # (J, Q_true)
        for t in range(T):
            acc = eps[:, t].copy()
            for p in range(1, config.P_true + 1):
                acc += A_lags[p - 1] @ theta[:, config.P_true + t - p]
            for q in range(1, config.Q_true + 1):
                if t - q >= 0 and w[0, t - q] != 0.0:
                    acc += effect[:, q - 1] * w[0, t - q]
            theta[:, config.P_true + t] = acc
        # cap the log-mean so extreme tail draws cannot push the Poisson
        # sampler past its finite-lambda limit; ln(1e15) is far above any
        # realistic abundance and the cap binds only in degenerate tails
        mu = np.exp(np.minimum(theta[:, config.P_true:], math.log(1e15)))
        counts = nb_sample(rng, mu, phi[:, None]).astype(np.float64)

        subjects.append(SubjectSeries(sid, times, counts, w, z))
        windows[sid] = (t_start, length)
        zs[sid] = z
        phis[sid] = phi

    sset = InterventionSeriesSet(
        tuple(subjects),
        tuple(f"taxon{j:04d}" for j in range(J)),
        ("w1",),
        ("z1",),
        scale_tag="counts",
    )
    truth = SimTruth(A_base=A, A_lags=A_lags, B=tuple(B), C=tuple(C),
                     J0=J0, J1=J1, c_null_rows=c_null_rows,
                     windows=windows, z=zs, phi=phis, config=config)
    return sset, truth


def nonnull_sets(truth: SimTruth, h_max: int):
    """Ground-truth nonnull/null taxa per forecast lag.

    J1(0) is the set of taxa with a nonzero row in B_0 (the minimal-delay
    effect matrix); J1(h) adds taxa reached by the autoregressive links,
    evaluated termwise: for each p <= min(h, P_true), any taxon whose row of
    A_p hits J1(h-p) is nonnull at lag h, as is any taxon with a nonzero row
    in B_h (zero for h >= Q_true). Returns (J1_by_lag, J0_by_lag).
    """
    if h_max < 0:
        raise ValidationError(f"h_max must be >= 0, got {h_max}")
    J = truth.config.J
    P_true = truth.config.P_true
    Q_true = truth.config.Q_true
    j1_by_lag = []
    for h in range(h_max + 1):
        members = set()
        if h < Q_true:
            members |= {j for j in range(J) if np.any(truth.B[h][j] != 0.0)}
        for p in range(1, min(h, P_true) + 1):
            prev = j1_by_lag[h - p]
            if not prev:
                continue
            indicator = np.zeros(J)
            indicator[list(prev)] = 1.0
            reached = truth.A_lags[p - 1] @ indicator
            members |= {j for j in range(J) if reached[j] != 0.0}
        j1_by_lag.append(frozenset(members))
    j1 = [tuple(sorted(s)) for s in j1_by_lag]
    j0 = [tuple(sorted(set(range(J)) - set(s))) for s in j1_by_lag]
    return j1, j0
