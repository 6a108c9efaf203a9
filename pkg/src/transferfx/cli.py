"""Command-line front end: simulate, ingest, fit, predict, select, benchmark,
replay. Every subcommand writes its artifacts plus a RunManifest recording the
resolved configuration and seeds, so `transferfx replay manifest.json`
reproduces the outputs bitwise.

Exit codes: 0 success, 2 validation error, 3 data error, 4 internal. Errors
are emitted to stderr as a single JSON line. The only environment knob is
TRANSFERFX_LOG_LEVEL (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .errors import DataError, TransferFXError, ValidationError
from .evalbench import cv_forecast_eval, export_inference_csv, inference_eval
from .gbrt import BoostConfig
from .mirrors import select_taxa
from .normalize import (MODE_NONE, MODE_SIZE_FACTOR, MODE_SIZE_FACTOR_ASINH,
                        apply_normalization, export_size_factors,
                        size_factors_auto)
from .simgen import SimConfig, SimTruth, simulate
from .transfer import (TransferModel, first_onset_index, fit_transfer,
                       forecast)
from .ts_core import (SCALE_COUNTS, SCALE_NORMALIZED, SCALE_NORMALIZED_ASINH,
                      export, format_value, ingest, interpolate)

log = logging.getLogger("transferfx")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

_NORMALIZE_FLAGS = {
    "none": MODE_NONE,
    "sf": MODE_SIZE_FACTOR,
    "sf-asinh": MODE_SIZE_FACTOR_ASINH,
}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the validation exit path."""

    def error(self, message):
        raise ValidationError(message)


def _resolve_seed(seed):
    """An omitted seed is generated (and recorded in the manifest)."""
    if seed is not None:
        return int(seed)
    return int(np.random.SeedSequence().entropy % (2 ** 32))


def _resolve_threads(threads):
    if threads is None:
        return os.cpu_count() or 1
    if threads < 1:
        raise ValidationError(f"--threads must be >= 1, got {threads}")
    return int(threads)


def _write_manifest(out_dir, subcommand, resolved, inputs, outputs, seconds):
    manifest = {
        "format": "transferfx-manifest",
        "version": __version__,
        "subcommand": subcommand,
        "resolved_args": resolved,
        "seeds": {k: v for k, v in resolved.items() if "seed" in k},
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_seconds": seconds,
    }
    path = os.path.join(str(out_dir), "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _ingest_dir(data_dir, scale_tag=SCALE_COUNTS):
    d = str(data_dir)
    paths = {name: os.path.join(d, f"{name}.csv")
             for name in ("reads", "interventions", "samples", "subjects")}
    missing = [p for p in paths.values() if not os.path.isfile(p)]
    if missing:
        raise DataError(f"missing dataset files: {', '.join(sorted(missing))}")
    return ingest(paths["reads"], paths["interventions"], paths["samples"],
                  paths["subjects"], scale_tag=scale_tag)


def _boost_config(args, seed):
    return BoostConfig(n_rounds=args.rounds, learning_rate=args.learning_rate,
                       max_depth=args.depth, min_samples_leaf=args.min_leaf,
                       subsample_rows=args.subsample, seed=seed)


def _add_boost_flags(p):
    p.add_argument("--rounds", type=int, default=100, help="boosting rounds")
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--depth", type=int, default=3, help="max tree depth")
    p.add_argument("--min-leaf", type=int, default=5, help="min samples per leaf")
    p.add_argument("--subsample", type=float, default=1.0,
                   help="row fraction per boosting round")


def _add_common(p, seed_help="RNG seed (generated and recorded if omitted)"):
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: available cores)")


def _normalized_set(counts_set, mode):
    if mode == MODE_NONE:
        return counts_set, None
    sf = size_factors_auto(counts_set)
    return apply_normalization(counts_set, mode, sf), sf


def _parse_lags(text):
    try:
        lags = tuple(int(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError:
        raise ValidationError(f"--lags expects comma-separated integers, got {text!r}")
    if not lags:
        raise ValidationError("--lags must name at least one horizon offset")
    return lags


def _parse_scenario(text, flag):
    try:
        vals = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ValidationError(f"{flag} expects comma-separated numbers, got {text!r}")
    if not vals:
        raise ValidationError(f"{flag} must give one constant per intervention channel")
    return np.asarray(vals, dtype=np.float64)


def cmd_simulate(args):
    with open(args.config) as fh:
        cfg = SimConfig.from_json(json.load(fh))
    if args.seed is not None:
        cfg = SimConfig.from_json({**cfg.to_json(), "seed": int(args.seed)})
    sset, truth = simulate(cfg)
    os.makedirs(args.out, exist_ok=True)
    outputs = list(export(sset, args.out).values())
    truth_path = os.path.join(args.out, "truth.json")
    truth.save(truth_path)
    outputs.append(truth_path)
    resolved = {**vars(args), "seed": cfg.seed, "sim_config": cfg.to_json()}
    return resolved, [args.config], outputs, args.out


def cmd_ingest(args):
    sset = _ingest_dir(args.data_dir)
    if args.interpolate_delta is not None:
        sset = interpolate(sset, args.interpolate_delta)
    os.makedirs(args.out, exist_ok=True)
    outputs = list(export(sset, args.out).values())
    return vars(args), [args.data_dir], outputs, args.out


def cmd_fit(args):
    seed = _resolve_seed(args.seed)
    threads = _resolve_threads(args.threads)
    mode = _NORMALIZE_FLAGS[args.normalize]
    sset = _ingest_dir(args.data_dir)
    sset, sf = _normalized_set(sset, mode)
    model = fit_transfer(sset, args.p, args.q, _boost_config(args, seed),
                         threads=threads)
    os.makedirs(args.out, exist_ok=True)
    model_path = os.path.join(args.out, "model.json")
    model.save(model_path)
    outputs = [model_path]
    if sf is not None:
        sf_path = os.path.join(args.out, "size_factors.csv")
        export_size_factors(sf, sf_path)
        outputs.append(sf_path)
    resolved = {**vars(args), "seed": seed, "threads": threads}
    return resolved, [args.data_dir], outputs, args.out


def cmd_predict(args):
    if args.horizon < 1:
        raise ValidationError(f"--horizon must be >= 1, got {args.horizon}")
    model = TransferModel.load(args.model)
    sset = _ingest_dir(args.data_dir)
    if model.scale_tag != sset.scale_tag:
        mode = {SCALE_NORMALIZED: MODE_SIZE_FACTOR,
                SCALE_NORMALIZED_ASINH: MODE_SIZE_FACTOR_ASINH}[model.scale_tag]
        sset, _ = _normalized_set(sset, mode)
    os.makedirs(args.out, exist_ok=True)
    fc_path = os.path.join(args.out, "forecasts.csv")
    with open(fc_path, "w") as fh:
        fh.write("subject,taxon,horizon,value\n")
        for subj in sset.subjects:
            t_star = first_onset_index(subj)
            revealed = subj.truncated(t_star + 1)
            pred = forecast(model, revealed, args.horizon)
            for j, name in enumerate(sset.taxa_names):
                for h in range(args.horizon):
                    fh.write(f"{subj.subject_id},{name},{h + 1},"
                             f"{format_value(pred[j, h], False)}\n")
    resolved = dict(vars(args))
    return resolved, [args.model, args.data_dir], [fc_path], args.out


def cmd_select(args):
    seed = _resolve_seed(args.seed)
    threads = _resolve_threads(args.threads)
    mode = _NORMALIZE_FLAGS[args.normalize]
    lags = _parse_lags(args.lags)
    sset = _ingest_dir(args.data_dir)
    sset, _ = _normalized_set(sset, mode)
    on = _parse_scenario(args.scenario_on, "--scenario-on")
    off = _parse_scenario(args.scenario_off, "--scenario-off")
    if on.size != sset.n_channels or off.size != sset.n_channels:
        raise ValidationError(
            f"scenario constants must match the {sset.n_channels} intervention "
            f"channel(s); got on={on.size}, off={off.size}"
        )
    config = _boost_config(args, seed)
    P, Q = args.p, args.q

    def recipe(half_set):
        return fit_transfer(half_set, P, Q, config, threads=threads)

    report = select_taxa(sset, on, off, recipe, q=args.q_fdr, lags=lags,
                         n_splits=args.splits, seed=seed)
    os.makedirs(args.out, exist_ok=True)
    sel_path = os.path.join(args.out, "selection.csv")
    mir_path = os.path.join(args.out, "mirrors.csv")
    meta_path = os.path.join(args.out, "run_metadata.json")
    report.export_selection_csv(sel_path)
    report.export_mirrors_csv(mir_path)
    report.export_metadata_json(meta_path, extra={
        "lag_p": P, "lag_q": Q, "normalize": args.normalize,
        "boost_config": asdict(config),
        "scenario_on": on.tolist(), "scenario_off": off.tolist(),
    })
    resolved = {**vars(args), "seed": seed, "threads": threads}
    return resolved, [args.data_dir], [sel_path, mir_path, meta_path], args.out


def cmd_benchmark(args):
    seed = _resolve_seed(args.seed)
    threads = _resolve_threads(args.threads)
    modes = []
    for tok in args.normalize.split(","):
        tok = tok.strip()
        if tok not in _NORMALIZE_FLAGS:
            raise ValidationError(
                f"--normalize entries must be among {sorted(_NORMALIZE_FLAGS)}, got {tok!r}"
            )
        modes.append(tok)
    counts_set = _ingest_dir(args.data_dir)
    config = _boost_config(args, seed)
    P, Q = args.p, args.q

    def recipe(train_set):
        return fit_transfer(train_set, P, Q, config, threads=threads)

    os.makedirs(args.out, exist_ok=True)
    all_rows = []
    for tok in modes:
        report = cv_forecast_eval(counts_set, recipe, n_folds=args.folds,
                                  H=args.horizon,
                                  normalization=_NORMALIZE_FLAGS[tok],
                                  seed=seed)
        all_rows.extend(report.rows)
    eval_path = os.path.join(args.out, "eval.csv")
    with open(eval_path, "w") as fh:
        fh.write("fold,method,normalization,mae,mae_truncated,n_scored,seconds\n")
        for r in all_rows:
            fh.write(f"{r['fold']},{r['method']},{r['normalization']},"
                     f"{format_value(r['mae'], False)},"
                     f"{format_value(r['mae_truncated'], False)},"
                     f"{r['n_scored']},{format_value(r['seconds'], False)}\n")
    outputs = [eval_path]
    inputs = [args.data_dir]
    if args.truth is not None:
        truth = SimTruth.load(args.truth)
        inputs.append(args.truth)
        lags = _parse_lags(args.lags)
        on = np.ones(counts_set.n_channels)
        off = np.zeros(counts_set.n_channels)
        sel_set, _ = _normalized_set(counts_set, _NORMALIZE_FLAGS[modes[0]])
        report = select_taxa(sel_set, on, off, recipe, q=args.q_fdr,
                             lags=lags, n_splits=args.splits, seed=seed)
        rows = []
        for h in lags:
            fdp, power = inference_eval(report.selected_taxa_for_lag(h), truth, h)
            rows.append({"lag": h, "fdp": fdp, "power": power,
                         "q": args.q_fdr, "seed": seed})
        inf_path = os.path.join(args.out, "inference_eval.csv")
        export_inference_csv(rows, inf_path)
        outputs.append(inf_path)
    resolved = {**vars(args), "seed": seed, "threads": threads}
    return resolved, inputs, outputs, args.out


_RUNNERS = {}


def cmd_replay(args):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    sub = manifest.get("subcommand")
    if sub not in _RUNNERS or sub == "replay":
        raise ValidationError(f"manifest names unknown subcommand {sub!r}")
    resolved = dict(manifest["resolved_args"])
    resolved.pop("func", None)
    replay_args = argparse.Namespace(**resolved)
    runner = _RUNNERS[sub]
    resolved2, inputs, outputs, out_dir = runner(replay_args)
    return ({**resolved2, "replayed_from": args.manifest},
            inputs + [args.manifest], outputs, out_dir)


def build_parser():
    parser = _Parser(prog="transferfx",
                     description="Transfer-function intervention analysis for "
                                 "count time series.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset + truth.json")
    p.add_argument("config", help="simulation config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="validate CSVs and re-export canonically")
    p.add_argument("data_dir", help="directory with reads/interventions/samples/subjects CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--interpolate-delta", type=float, default=None,
                   help="resample onto a uniform grid with this spacing")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit per-taxon transfer models")
    p.add_argument("data_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--p", type=int, required=True, help="abundance lags")
    p.add_argument("--q", type=int, required=True, help="intervention lags")
    p.add_argument("--normalize", choices=sorted(_NORMALIZE_FLAGS), default="none")
    _add_boost_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="forecast holdout subjects from onset")
    p.add_argument("model", help="model.json from fit")
    p.add_argument("data_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("select", help="mirror-statistic taxon selection")
    p.add_argument("data_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--q-fdr", type=float, default=0.2, dest="q_fdr",
                   help="target false discovery rate")
    p.add_argument("--splits", type=int, default=25)
    p.add_argument("--lags", default="0",
                   help="comma-separated post-onset offsets to test")
    p.add_argument("--scenario-on", default="1", dest="scenario_on",
                   help="per-channel constants for the active scenario")
    p.add_argument("--scenario-off", default="0", dest="scenario_off",
                   help="per-channel constants for the reference scenario")
    p.add_argument("--normalize", choices=sorted(_NORMALIZE_FLAGS), default="none")
    _add_boost_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("benchmark", help="cross-validated forecast benchmark")
    p.add_argument("data_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--horizon", type=int, default=5)
    p.add_argument("--normalize", default="none",
                   help="comma-separated list among none,sf,sf-asinh")
    p.add_argument("--truth", default=None,
                   help="truth.json; also score selection FDP/Power under "
                        "the first --normalize entry")
    p.add_argument("--q-fdr", type=float, default=0.2, dest="q_fdr")
    p.add_argument("--splits", type=int, default=25)
    p.add_argument("--lags", default="0")
    _add_boost_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("manifest", help="manifest.json from a previous run")
    p.set_defaults(func=cmd_replay)

    return parser


_RUNNERS.update({
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "select": cmd_select,
    "benchmark": cmd_benchmark,
    "replay": cmd_replay,
})


def _fail(code_name, message, code):
    sys.stderr.write(json.dumps({"error": code_name, "message": str(message)}) + "\n")
    return code


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("TRANSFERFX_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        t0 = time.perf_counter()
        resolved, inputs, outputs, out_dir = args.func(args)
        resolved.pop("func", None)
        resolved.setdefault("subcommand", args.subcommand)
        seconds = time.perf_counter() - t0
        manifest_path = _write_manifest(out_dir, resolved["subcommand"],
                                        resolved, inputs, outputs, seconds)
        log.info("%s wrote %d artifact(s) + %s in %.2fs", args.subcommand,
                 len(outputs), manifest_path, seconds)
    except ValidationError as exc:
        return _fail("validation", exc, EXIT_VALIDATION)
    except DataError as exc:
        return _fail("data", exc, EXIT_DATA)
    except TransferFXError as exc:
        return _fail("internal", exc, EXIT_INTERNAL)
    except SystemExit:
        raise
    except Exception as exc:
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
