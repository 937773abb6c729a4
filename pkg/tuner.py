#!/usr/bin/env python3
import os
import sys
import glob
import argparse
import logging
from dataclasses import dataclass, field

import numpy as np
from dotenv import load_dotenv
from tabulate import tabulate

from agent import PolicyParams
from bench import BenchmarkConfig, BenchmarkReport, emit_report, fixture_objective, run_benchmark, summary_table
from bench.bench_runner import FIXTURE
from search_space import (
    TuningError,
    InvalidInputError,
    MissingArtifactError,
    load_space,
    parse_vector,
    sample_uniform,
    save_space,
)
from search_space.artifacts import (
    check_space_hash,
    data_sha256,
    file_sha256,
    read_json,
    write_json,
)
from surrogate import (
    DeviceDataset,
    GroundTruthObjective,
    SurrogateObjective,
    SurrogateTrainConfig,
    gen_synthetic_device_data,
    load_profiles,
    train_device_model,
)
from trainer import TrainConfig, rollout, stream_rng, train
from trainer.trajectory import EVAL_STREAM

load_dotenv()

LOG_LEVEL = os.getenv("TUNER_LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("TUNER_LOG_FILE", "tuner.log")
DEFAULT_JOBS = int(os.getenv("TUNER_JOBS", "1"))
MANIFEST_NAME = "manifest.json"


def configure_logging():
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - Tuner - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(LOG_FILE),
            logging.StreamHandler()
        ]
    )


@dataclass
class RunManifest:
    """Artifacts, seeds and config hashes of one output directory, merged across subcommands"""
    artifacts: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    config_hashes: dict = field(default_factory=dict)
    space_hash: str = ""

    @classmethod
    def load(cls, out_dir):
        path = os.path.join(out_dir, MANIFEST_NAME)
        if not os.path.exists(path):
            return cls()
        data = read_json(path)
        return cls(data.get("artifacts", {}), data.get("seeds", {}), data.get("config_hashes", {}),
                   data.get("space_hash", ""))

    def add(self, name, path):
        self.artifacts[name] = path

    def record_config(self, name, config):
        self.config_hashes[name] = data_sha256(config.to_dict())

    def save(self, out_dir):
        missing = []
        for name, paths in self.artifacts.items():
            for path in paths if isinstance(paths, list) else [paths]:
                if not os.path.exists(path):
                    missing.append(f"{name}={path}")
        if missing:
            raise MissingArtifactError(f"manifest references missing files: {', '.join(missing)}")
        write_json(os.path.join(out_dir, MANIFEST_NAME), {
            "artifacts": self.artifacts,
            "seeds": self.seeds,
            "config_hashes": self.config_hashes,
            "space_hash": self.space_hash,
        })


def load_config(cls, path, **overrides):
    """Config file values with non-None flag overrides applied on top"""
    data = read_json(path) if path else {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return cls.from_dict(data)


def resolve_objective(objective_path, space_path=None, devices=None):
    """Surrogate JSON or the synthetic fixture, optionally restricted to some devices"""
    space = load_space(space_path) if space_path else None
    if objective_path == FIXTURE:
        obj = fixture_objective()
        if space is not None:
            check_space_hash(space.space_hash(), obj.space.space_hash(), "fixture objective")
    else:
        obj = SurrogateObjective.load(objective_path, space)
    if devices:
        obj = obj.restrict(devices)
        logging.info(f"Restricted objective to devices: {', '.join(devices)}")
    return obj


def cmd_gen_data(args):
    """One CSV per configured device, sampled from its synthetic response"""
    if not args.space or not args.profiles:
        raise InvalidInputError("gen-data needs --space and --profiles")
    space = load_space(args.space)
    profiles = load_profiles(args.profiles, space)
    data_dir = os.path.join(args.out, "data")
    os.makedirs(data_dir, exist_ok=True)

    manifest = RunManifest.load(args.out)
    space_out = os.path.join(args.out, "space.json")
    save_space(space, space_out)
    profiles_out = os.path.join(args.out, "profiles.json")
    write_json(profiles_out, {"devices": [p.to_dict(space) for p in profiles]})

    paths = []
    for index, profile in enumerate(profiles):
        dataset = gen_synthetic_device_data(space, profile, stream_rng(args.seed, index))
        path = os.path.join(data_dir, f"{profile.device_id}.csv")
        dataset.to_csv(path, space)
        paths.append(path)

    manifest.space_hash = space.space_hash()
    manifest.add("space", space_out)
    manifest.add("profiles", profiles_out)
    manifest.add("datasets", paths)
    manifest.seeds["gen_data"] = args.seed
    manifest.save(args.out)
    print(f"Generated {len(paths)} device datasets in {data_dir}")


def cmd_train_surrogate(args):
    if not args.space:
        raise InvalidInputError("train-surrogate needs --space")
    space = load_space(args.space)
    data_dir = args.data or os.path.join(args.out, "data")
    paths = sorted(glob.glob(os.path.join(data_dir, "*.csv")))
    if not paths:
        raise MissingArtifactError(f"no device datasets found in {data_dir}")
    config = load_config(SurrogateTrainConfig, args.config, seed=args.seed, epochs=args.epochs)

    models = []
    for path in paths:
        dataset = DeviceDataset.from_csv(path, space)
        models.append(train_device_model(dataset, space, config))
    objective = SurrogateObjective(space, models, args.aggregation)
    out_path = os.path.join(args.out, "surrogate.json")
    objective.save(out_path)

    print(tabulate([[m.device_id, f"{m.final_rmse:.5f}"] for m in models],
                   headers=["Device", "Train RMSE"], tablefmt="grid"))

    manifest = RunManifest.load(args.out)
    manifest.space_hash = space.space_hash()
    manifest.add("surrogate", out_path)
    manifest.seeds["train_surrogate"] = config.seed
    manifest.record_config("surrogate", config)
    manifest.save(args.out)


def cmd_train_agent(args):
    obj = resolve_objective(args.objective, args.space, args.device)
    config = load_config(TrainConfig, args.config, seed=args.seed, total_updates=args.updates,
                         episode_length=args.episode_length)
    params, curve = train(obj.space, obj, config, jobs=args.jobs)

    os.makedirs(args.out, exist_ok=True)
    checkpoint = os.path.join(args.out, "agent.json")
    curve_path = os.path.join(args.out, "learning_curve.csv")
    params.save(checkpoint)
    curve.to_csv(curve_path)

    manifest = RunManifest.load(args.out)
    manifest.space_hash = obj.space.space_hash()
    manifest.add("checkpoint", checkpoint)
    manifest.add("learning_curve", curve_path)
    if curve.evaluations:
        eval_path = os.path.join(args.out, "eval_curve.csv")
        curve.evaluations_to_csv(eval_path)
        manifest.add("eval_curve", eval_path)
    manifest.seeds["train_agent"] = config.seed
    manifest.record_config("train", config)
    manifest.save(args.out)

    if len(curve):
        tail = curve.mean_best_f()[-max(1, len(curve) // 10):]
        print(f"Trained {len(curve)} updates; mean best f over the last 10%: {float(np.mean(tail)):.6f}")
    print(f"Checkpoint written to {checkpoint}")


def cmd_tune(args):
    """Deploy the trained policy: one rollout, report the best point found"""
    obj = resolve_objective(args.objective, args.space, args.device)
    space = obj.space
    params = PolicyParams.load(args.checkpoint, space)
    x0 = parse_vector(args.x0, space) if args.x0 else sample_uniform(space, stream_rng(args.seed, EVAL_STREAM))
    trajectory = rollout(params, obj, args.episode_length, x0, stream_rng(args.seed, EVAL_STREAM, 1),
                         greedy=args.greedy)
    best_x, best_f = trajectory.best_x, trajectory.best_f

    print(tabulate([best_x.to_list(space) + [f"{best_f:.6f}"]], headers=space.names + ["f(x*)"], tablefmt="grid"))
    print("x* = " + ",".join(str(v) for v in best_x.to_list(space)))
    print(f"f(x*) = {best_f:.10g}")

    if args.out:
        result_path = os.path.join(args.out, "tune_result.json")
        write_json(result_path, {"x0": x0.to_list(space), "best_x": best_x.to_list(space), "best_f": best_f,
                                 "evaluations": obj.evaluations, "greedy": bool(args.greedy),
                                 "space_hash": space.space_hash()})
        manifest = RunManifest.load(args.out)
        manifest.add("tune_result", result_path)
        manifest.seeds["tune"] = args.seed
        manifest.save(args.out)


def cmd_bench(args):
    config = load_config(BenchmarkConfig, args.config, objective=args.objective, checkpoint=args.checkpoint,
                         seed=args.seed, n_inits=args.inits, episode_length=args.episode_length,
                         methods=args.methods, devices=args.device, profiles=args.profiles)
    obj = resolve_objective(config.objective, args.space, config.devices)
    truth = obj if isinstance(obj, GroundTruthObjective) else None
    if truth is None and config.profiles:
        truth = GroundTruthObjective(obj.space, load_profiles(config.profiles, obj.space), obj.aggregation)
        if config.devices:
            truth = truth.restrict(config.devices)
    report = run_benchmark(config, jobs=args.jobs, objective=obj, truth=truth)
    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "report.json")
    emit_report(report, "json", report_path)
    print(summary_table(report))

    manifest = RunManifest.load(args.out)
    manifest.space_hash = obj.space.space_hash()
    manifest.add("report", report_path)
    manifest.seeds["bench"] = config.seed
    manifest.record_config("bench", config)
    manifest.save(args.out)


def cmd_report(args):
    report_path = args.report or os.path.join(args.out, "report.json")
    report = BenchmarkReport.load(report_path)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "report.csv")
    emit_report(report, "csv", csv_path)
    print(summary_table(report))

    manifest = RunManifest.load(args.out)
    manifest.add("report_csv", csv_path)
    manifest.config_hashes["report"] = file_sha256(report_path)
    manifest.save(args.out)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--space', help='Search space JSON file')
    common.add_argument('--config', help='Module config JSON file (flags override its values)')
    common.add_argument('--seed', type=int, default=None, help='Master seed')
    common.add_argument('--out', default='run', help='Output directory')
    common.add_argument('--jobs', type=int, default=DEFAULT_JOBS, help='Parallel rollouts / benchmark cells')

    parser = argparse.ArgumentParser(description='Learned tuning of device knobs: data, surrogates, agent, benchmark')
    subparsers = parser.add_subparsers(dest='command', help='Pipeline step to run')

    gen_parser = subparsers.add_parser('gen-data', parents=[common], help='Generate synthetic device datasets')
    gen_parser.add_argument('--profiles', help='Device profile JSON (explicit devices or generator block)')

    surrogate_parser = subparsers.add_parser('train-surrogate', parents=[common], help='Fit per-device MLP surrogates')
    surrogate_parser.add_argument('--data', help='Directory of device CSVs (default: <out>/data)')
    surrogate_parser.add_argument('--epochs', type=int, help='Override the number of training epochs')
    surrogate_parser.add_argument('--aggregation', choices=['mean', 'min'], default='mean',
                                  help='How device predictions are combined')

    agent_parser = subparsers.add_parser('train-agent', parents=[common], help='Train the LSTM tuning policy')
    agent_parser.add_argument('--objective', default=FIXTURE, help="Surrogate JSON or 'fixture'")
    agent_parser.add_argument('--device', action='append', help='Restrict the objective to a device (repeatable)')
    agent_parser.add_argument('--updates', type=int, help='Override total_updates')
    agent_parser.add_argument('--episode-length', type=int, help='Override episode_length')

    tune_parser = subparsers.add_parser('tune', parents=[common], help='Run the trained policy once')
    tune_parser.add_argument('--objective', default=FIXTURE, help="Surrogate JSON or 'fixture'")
    tune_parser.add_argument('--checkpoint', required=True, help='Agent checkpoint JSON')
    tune_parser.add_argument('--x0', help="Starting point, e.g. '3,7,0,12' (default: sampled)")
    tune_parser.add_argument('--episode-length', type=int, default=50, help='Number of tuning steps')
    tune_parser.add_argument('--greedy', action='store_true', help='Take the most likely action at every step')
    tune_parser.add_argument('--device', action='append', help='Restrict the objective to a device (repeatable)')

    bench_parser = subparsers.add_parser('bench', parents=[common], help='Budget-matched comparison')
    bench_parser.add_argument('--objective', help="Surrogate JSON or 'fixture'")
    bench_parser.add_argument('--checkpoint', help='Agent checkpoint JSON (needed for l2o)')
    bench_parser.add_argument('--methods', nargs='+', help='Subset of l2o powell_default powell_budget tpe random')
    bench_parser.add_argument('--inits', type=int, help='Number of paired initial points')
    bench_parser.add_argument('--episode-length', type=int, help='Deployment episode length T')
    bench_parser.add_argument('--profiles', help='Device profiles for ground-truth rescoring')
    bench_parser.add_argument('--device', action='append', help='Restrict the objective to a device (repeatable)')

    report_parser = subparsers.add_parser('report', parents=[common], help='Convert a benchmark report to CSV')
    report_parser.add_argument('--report', help='Report JSON (default: <out>/report.json)')

    return parser


COMMANDS = {
    'gen-data': cmd_gen_data,
    'train-surrogate': cmd_train_surrogate,
    'train-agent': cmd_train_agent,
    'tune': cmd_tune,
    'bench': cmd_bench,
    'report': cmd_report,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2
    configure_logging()
    if args.command in ('gen-data', 'tune') and args.seed is None:
        args.seed = 0
    try:
        COMMANDS[args.command](args)
    except TuningError as e:
        logging.error(f"{args.command} failed: {e.message}")
        print(f"error: {e.category}: {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logging.exception(f"{args.command} crashed")
        print(f"error: internal: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
