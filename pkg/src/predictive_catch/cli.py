"""Command-line harness: simulate, featurize, train, evaluate, ablate, report.

Every stage reads and writes under one run directory (``--out``)::

    trials/      subject_XX.csv, manifest.json
    features/    features.csv, manifest.json
    models/      lstm_I27/ ... linear_I27/ ... mean/, normalizer.txt, split.json, manifest.json
    evaluation/  mse_by_distance.csv, rmse_components.csv
    ablation/    ablation_I600_dt013.csv ...
    report/      everything above plus behavior.csv and summary.json

Exit codes: 0 success, 1 usage, 2 data error, 3 training divergence.
"""
from __future__ import annotations

import argparse
from dataclasses import asdict, replace
import logging
from pathlib import Path
import shutil
import sys

from . import analysis, baselines
from .agent import AgentParams, MalformedTrialError, simulate_population
from .ballistics import TrajectoryConfig
from .datafiles import (DataFileError, git_blob_hash, read_manifest, read_trials, write_manifest,
                        write_trials)
from .ensemble import (DESK_HORIZONS, DESK_EPOCHS, DEFAULT_INTEGRATION_MS, Dataset, ModelSpec,
                       TrainedModel, TrainingDivergedError, train_model)
from .features import DegenerateGeometryError, Normalizer, featurize, load_features, save_features

log = logging.getLogger("predictive_catch")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
ABLATION_HORIZONS = (1, 20, 35)  # 13, 267 and 467 ms


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# ------------------------------------------------------------------ stages

def cmd_simulate(args) -> None:
    out = Path(args.out) / "trials"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    config = TrajectoryConfig(rng_seed=args.seed)
    agent = AgentParams.noiseless if args.noiseless else AgentParams
    params = agent(rng_seed=args.seed)
    trials = simulate_population(args.subjects, args.trials_per_subject, seed=args.seed,
                                 config=config, params=params, jitter_subjects=not args.noiseless)
    files = {}
    for s in range(args.subjects):
        name = f"subject_{s:02d}.csv"
        write_trials(out / name, [t for t in trials if t.subject_id == s])
        files[name] = git_blob_hash(out / name)
    write_manifest(out / "manifest.json", {
        "stage": "simulate", "seed": args.seed, "subjects": args.subjects,
        "trials_per_subject": args.trials_per_subject, "noiseless": bool(args.noiseless),
        "trajectory_config": asdict(config), "agent_params": asdict(params), "files": files})
    log.info("wrote %d trials to %s", len(trials), out)


def _load_trials(run: Path):
    d = run / "trials"
    manifest = read_manifest(d / "manifest.json")
    config = TrajectoryConfig(**{k: tuple(v) if isinstance(v, list) else v
                                 for k, v in manifest["trajectory_config"].items()})
    trials = []
    for name in sorted(manifest["files"]):
        trials += read_trials(d / name, config.head_position, config.gravity, config.blank_duration)
    return trials, config, manifest


def cmd_featurize(args) -> None:
    run = Path(args.out)
    trials, config, tmanifest = _load_trials(run)
    if not trials:
        raise DataFileError("no trials to featurize")
    out = run / "features"
    out.mkdir(parents=True, exist_ok=True)
    save_features(out / "features.csv", featurize(trials, config.ball_radius))
    write_manifest(out / "manifest.json", {
        "stage": "featurize", "seed": tmanifest["seed"], "n_trials": len(trials),
        "ball_radius": config.ball_radius, "trials_hashes": tmanifest["files"],
        "dataset_hash": git_blob_hash(out / "features.csv")})
    log.info("featurized %d trials", len(trials))


def _spec(args, integration_ms: float) -> ModelSpec:
    spec = ModelSpec(integration_ms=integration_ms, seed=args.seed)
    if args.desk_mode:
        spec = spec.desk(args.horizons or DESK_HORIZONS, args.epochs_cap or DESK_EPOCHS)
    elif args.horizons:
        spec = replace(spec, horizons=args.horizons)
    if args.epochs_cap:
        spec = replace(spec, max_epochs=args.epochs_cap)
    return spec


def cmd_train(args) -> None:
    run = Path(args.out)
    fpath = run / "features" / "features.csv"
    if not fpath.exists():
        raise FileNotFoundError(f"no featurized dataset at {fpath}; run `featurize` first")
    featurized = load_features(fpath)
    dataset = Dataset.build(featurized, args.seed)
    out = run / "models"
    out.mkdir(parents=True, exist_ok=True)
    dataset.normalizer.save(out / "normalizer.txt")
    write_manifest(out / "split.json", dataset.split_ids())
    integrations = args.integration_ms or DEFAULT_INTEGRATION_MS
    models = {}
    for i_ms in integrations:
        spec = _spec(args, i_ms)
        log.info("training I=%g ms, %d horizons", i_ms, len(spec.horizons))
        model = train_model(spec, dataset, workers=args.workers)
        model.save(out / model.label)
        linear = baselines.fit_linear_model(dataset, i_ms, spec.horizons, args.ridge_lambda)
        linear.save(out / linear.label)
        models[model.label] = asdict(spec)
        models[linear.label] = {"integration_ms": i_ms, "ridge_lambda": args.ridge_lambda}
    horizons = sorted({h for i_ms in integrations for h in _spec(args, i_ms).horizons})
    baselines.fit_mean_model(dataset, horizons).save(out / "mean")
    write_manifest(out / "manifest.json", {
        "stage": "train", "seed": args.seed, "split_seed": args.seed, "desk_mode": args.desk_mode,
        "integration_ms": list(integrations), "models": models,
        "dataset_hash": git_blob_hash(fpath), "split_file": "split.json"})


def _load_run(run: Path):
    """Dataset with the recorded split, and every trained predictor in the run."""
    mdir = run / "models"
    manifest = read_manifest(mdir / "manifest.json")
    fpath = run / "features" / "features.csv"
    if not fpath.exists():
        raise FileNotFoundError(f"no featurized dataset at {fpath}")
    if git_blob_hash(fpath) != manifest["dataset_hash"]:
        raise DataFileError(f"{fpath} changed since the models were trained")
    dataset = Dataset.from_partitions(load_features(fpath), read_manifest(mdir / "split.json"),
                                      Normalizer.load(mdir / "normalizer.txt"))
    if not dataset.test:
        raise DataFileError("the test partition is empty; nothing to evaluate")
    lstm, linear = [], []
    for i_ms in manifest["integration_ms"]:
        tag = f"I{i_ms:g}"
        for kind, cls, bucket in (("lstm", TrainedModel, lstm), ("linear", baselines.LinearModel, linear)):
            d = mdir / f"{kind}_{tag}"
            if not (d / "manifest.json").exists():
                raise FileNotFoundError(f"missing trained model {d}; rerun `train`")
            bucket.append(cls.load(d))
    if not (mdir / "mean" / "manifest.json").exists():
        raise FileNotFoundError(f"missing mean baseline {mdir / 'mean'}; rerun `train`")
    return dataset, lstm, linear, baselines.MeanPredictor.load(mdir / "mean")


def _evaluate(dataset, lstm, linear, mean, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    curves, components = [], []
    for model in lstm + linear:
        curves.append(analysis.mse_by_distance(model, dataset))
        components += analysis.rmse_components(model, dataset)
    curves.append(analysis.mse_by_distance(mean, dataset))
    components += analysis.mean_band_curves(mean)
    components += [analysis.in_centimeters(c) for c in components if c.unit == "m"]
    analysis.write_curves(out / "mse_by_distance.csv", curves)
    analysis.write_curves(out / "rmse_components.csv", components)


def _ablate(dataset, lstm, out: Path, horizons=None) -> list:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for model in lstm:
        wanted = horizons or [h for h in ABLATION_HORIZONS if h in model.horizons] or model.horizons
        for m in analysis.ablation_matrix(model, dataset, wanted):
            name = f"ablation_I{m.integration_ms:g}_dt{round(m.horizon_ms):03d}.csv"
            (out / name).write_text(m.to_text())
            written.append(name)
    return written


def cmd_evaluate(args) -> None:
    run = Path(args.out)
    dataset, lstm, linear, mean = _load_run(run)
    _evaluate(dataset, lstm, linear, mean, run / "evaluation")


def cmd_ablate(args) -> None:
    run = Path(args.out)
    dataset, lstm, _, _ = _load_run(run)
    if args.integration_ms:
        lstm = [m for m in lstm if m.spec.integration_ms in args.integration_ms]
        if not lstm:
            raise UsageError(f"no trained model for --integration-ms {args.integration_ms}")
    _ablate(dataset, lstm, run / "ablation", args.horizons)


def cmd_report(args) -> None:
    run = Path(args.out)
    dataset, lstm, linear, mean = _load_run(run)
    out = run / "report"
    if out.exists():
        shutil.rmtree(out)
    _evaluate(dataset, lstm, linear, mean, out)
    matrices = _ablate(dataset, lstm, out)
    trials, _, _ = _load_trials(run)
    behavior = analysis.behavior_summary(trials)
    (out / "behavior.csv").write_text(behavior.to_text())
    summary = {
        "catch_rate": behavior.catch_rate,
        "displacement_ratio_mean": behavior.displacement_ratio[0],
        "pursuit_gain_mean": behavior.pursuit_gain[0],
        "reappearance_speed_deg_s_mean": behavior.reappearance_speed[0],
        "n_trials": behavior.n_trials,
        "n_test_trials": len(dataset.test),
        "ablation_files": matrices,
        "mse_by_distance": {m.label: analysis.mse_by_distance(m, dataset).value.tolist()
                            for m in lstm + linear},
        "models_manifest_hash": git_blob_hash(run / "models" / "manifest.json"),
    }
    write_manifest(out / "summary.json", summary)
    log.info("report written to %s", out)


def cmd_pipeline(args) -> None:
    for stage in (cmd_simulate, cmd_featurize, cmd_train, cmd_report):
        stage(args)


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="run directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--subjects", type=int, default=10)
    sim.add_argument("--trials-per-subject", type=int, default=135)
    sim.add_argument("--noiseless", action="store_true",
                     help="unit pursuit gain and no motor noise (learnability checks)")

    train = argparse.ArgumentParser(add_help=False)
    train.add_argument("--integration-ms", type=_float_list, default=None,
                       help="comma-separated integration durations (default 27,53,200,600)")
    train.add_argument("--horizons", type=_int_list, default=None,
                       help="comma-separated prediction distances in frames")
    train.add_argument("--desk-mode", action="store_true",
                       help="horizons 1,19,37, at most 200 epochs, faster optimizer settings")
    train.add_argument("--epochs-cap", type=int, default=None)
    train.add_argument("--ridge-lambda", type=float, default=baselines.DEFAULT_RIDGE)
    train.add_argument("--workers", type=int, default=1)

    select = argparse.ArgumentParser(add_help=False)
    select.add_argument("--integration-ms", type=_float_list, default=None)
    select.add_argument("--horizons", type=_int_list, default=None)

    parser = _Parser(prog="predictive-catch", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    stages = [
        ("simulate", [common, sim], "generate trial files", cmd_simulate),
        ("featurize", [common], "extract 16-d features", cmd_featurize),
        ("train", [common, train], "train LSTM models and baselines", cmd_train),
        ("evaluate", [common], "error curves", cmd_evaluate),
        ("ablate", [common, select], "feature ablation matrices", cmd_ablate),
        ("report", [common], "curves, matrices and behavior", cmd_report),
        ("pipeline", [common, sim, train], "simulate, featurize, train and report in one go",
         cmd_pipeline),
    ]
    for name, parents, help_text, func in stages:
        sub.add_parser(name, parents=parents, help=help_text).set_defaults(func=func)
    return parser


def _validate(args) -> None:
    for name in ("subjects", "trials_per_subject", "epochs_cap", "workers"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be at least 1")
    if getattr(args, "ridge_lambda", 0) < 0:
        raise UsageError("--ridge-lambda must be non-negative")
    hz = getattr(args, "horizons", None)
    if hz is not None and (not hz or min(hz) < 1 or max(hz) > 37):
        raise UsageError("--horizons must lie within 1..37")
    if hz is not None:
        args.horizons = tuple(sorted(set(hz)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
        args.func(args)
    except UsageError as exc:
        print(f"predictive-catch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergedError as exc:
        print(f"predictive-catch: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataFileError, DegenerateGeometryError, MalformedTrialError, FileNotFoundError,
            OSError, ValueError) as exc:
        print(f"predictive-catch: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
