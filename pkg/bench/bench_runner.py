#!/usr/bin/env python3
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd
from tabulate import tabulate

from agent import PolicyParams, check_policy_matches_space
from baselines import BaselineBudget, TpeConfig, powell, random_search, tpe
from bench.fixtures import fixture_objective
from search_space import InvalidInputError, ArtifactIOError, MissingArtifactError, TuningVector, sample_uniform
from search_space.artifacts import read_json, write_json, reject_unknown_keys
from surrogate import GroundTruthObjective, SurrogateObjective, load_profiles
from trainer.trajectory import BENCH_STREAM, rollout, stream_rng

# Order fixes each method's random stream, whatever subset is requested
METHODS = ("l2o", "powell_default", "powell_budget", "tpe", "random")
POWELL_SAFETY_LIMIT = 10_000
POWELL_DEFAULT_TOLERANCE = 1e-8
FIXTURE = "fixture"
SUMMARY_ROWS = ("min", "q1", "median", "q3", "max", "mean")
CSV_COLUMNS = ["method", "init", "best_f", "evals", "seconds"]


@dataclass
class BenchmarkConfig:
    objective: str = FIXTURE
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    n_inits: int = 16
    episode_length: int = 50
    checkpoint: Optional[str] = None
    seed: int = 42
    devices: Optional[List[str]] = None
    profiles: Optional[str] = None
    powell_tolerance: float = POWELL_DEFAULT_TOLERANCE
    tpe_gamma: float = 0.25
    tpe_startup: int = 10
    tpe_candidates: int = 24

    def __post_init__(self):
        self.methods = list(self.methods)
        if not self.methods:
            raise InvalidInputError("benchmark needs at least one method")
        unknown = sorted(set(self.methods) - set(METHODS))
        if unknown:
            raise InvalidInputError(f"unknown benchmark methods: {', '.join(unknown)}")
        if self.n_inits < 1 or self.episode_length < 1:
            raise InvalidInputError("n_inits and episode_length must be >= 1")

    @classmethod
    def from_dict(cls, data):
        reject_unknown_keys(data, cls.__dataclass_fields__, "benchmark config")
        return cls(**{k: v for k, v in data.items() if k != "_note"})

    def to_dict(self):
        return asdict(self)


class BoxStats(NamedTuple):
    min: float
    q1: float
    median: float
    q3: float
    max: float

    @property
    def iqr(self):
        return self.q3 - self.q1


def box_stats(values) -> BoxStats:
    """Five-number summary; quartiles interpolate linearly between order statistics"""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InvalidInputError("box statistics of an empty list")
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return BoxStats(*(float(v) for v in q))


def budget_match(T) -> Dict[str, int]:
    """Evaluation budget per method for an L2O deployment episode of T steps"""
    if T < 1:
        raise InvalidInputError(f"episode length must be >= 1, got {T}")
    return {"l2o": T + 1, "powell_default": POWELL_SAFETY_LIMIT, "powell_budget": T + 1, "tpe": T + 1,
            "random": T + 1}


@dataclass
class CellResult:
    method: str
    init: int
    best_f: float
    evals: int
    seconds: float
    best_x: list


@dataclass
class MethodSummary:
    raw: List[float]
    evals: List[int]
    seconds: List[float]
    best_x: List[list]
    true_raw: Optional[List[float]] = None

    @property
    def box(self):
        return box_stats(self.raw)

    @property
    def mean_seconds(self):
        return float(np.mean(self.seconds))

    def to_dict(self):
        data = {
            "raw": list(self.raw),
            "box": self.box._asdict(),
            "mean_seconds": self.mean_seconds,
            "evals": list(self.evals),
            "seconds": list(self.seconds),
            "best_x": [list(x) for x in self.best_x],
        }
        if self.true_raw is not None:
            data["true_raw"] = list(self.true_raw)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls([float(v) for v in data["raw"]], [int(v) for v in data["evals"]],
                   [float(v) for v in data["seconds"]], [list(x) for x in data["best_x"]],
                   None if data.get("true_raw") is None else [float(v) for v in data["true_raw"]])


@dataclass
class BenchmarkReport:
    methods: Dict[str, MethodSummary]
    config: dict

    def to_dict(self):
        return {"methods": {m: s.to_dict() for m, s in self.methods.items()}, "config": dict(self.config)}

    @classmethod
    def from_dict(cls, data):
        if "methods" not in data or not data["methods"]:
            raise InvalidInputError("benchmark report has no methods")
        return cls({m: MethodSummary.from_dict(s) for m, s in data["methods"].items()}, dict(data.get("config", {})))

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path))

    def raw_matrix(self):
        return {m: list(s.raw) for m, s in self.methods.items()}


def load_objective(config: BenchmarkConfig, space=None):
    """Benchmark objective plus the ground-truth objective used for rescoring (or None)"""
    if config.objective == FIXTURE:
        obj = fixture_objective()
        truth = obj
    else:
        obj = SurrogateObjective.load(config.objective, space)
        truth = None
        if config.profiles:
            truth = GroundTruthObjective(obj.space, load_profiles(config.profiles, obj.space), obj.aggregation)
    if config.devices:
        obj = obj.restrict(config.devices)
        truth = truth.restrict(config.devices) if truth is not None else None
    return obj, truth


def initial_points(space, seed, n_inits):
    """Shared starting points; init i always draws from the same stream"""
    return [sample_uniform(space, stream_rng(seed, BENCH_STREAM, i)) for i in range(n_inits)]


def _run_cell(method, init, x0, obj, params, config: BenchmarkConfig) -> CellResult:
    space = obj.space
    budgets = budget_match(config.episode_length)
    cell_obj = obj.with_counter()
    # Random search and TPE startup share the init stream, so their first trial is x0
    rng = stream_rng(config.seed, BENCH_STREAM, init)
    started = time.perf_counter()
    if method == "l2o":
        trajectory = rollout(params, cell_obj, config.episode_length, x0,
                             stream_rng(config.seed, BENCH_STREAM, init, METHODS.index(method)))
        best_f, best_x = trajectory.best_f, trajectory.best_x
    else:
        if method in ("powell_default", "powell_budget"):
            result = powell(cell_obj, space, x0, BaselineBudget(budgets[method], config.powell_tolerance))
        elif method == "tpe":
            tpe_config = TpeConfig(config.tpe_gamma, min(config.tpe_startup, budgets[method]),
                                   config.tpe_candidates, config.seed)
            result = tpe(cell_obj, space, BaselineBudget(budgets[method]), tpe_config, rng)
        else:
            result = random_search(cell_obj, space, BaselineBudget(budgets[method]), rng)
        best_f, best_x = result.best_f, result.best_x
    seconds = time.perf_counter() - started
    evals = cell_obj.evaluations
    if evals > budgets[method]:
        raise InvalidInputError(f"{method} used {evals} evaluations, budget is {budgets[method]}")
    return CellResult(method, init, float(best_f), int(evals), seconds, best_x.to_list(space))


def run_benchmark(config: BenchmarkConfig, jobs=1, objective=None, params=None, truth=None) -> BenchmarkReport:
    """Paired comparison of every requested method over n_inits shared starting points"""
    if objective is None:
        objective, truth = load_objective(config)
    space = objective.space
    if "l2o" in config.methods and params is None:
        if not config.checkpoint:
            raise MissingArtifactError("method l2o needs an agent checkpoint")
        params = PolicyParams.load(config.checkpoint, space)
    if params is not None:
        check_policy_matches_space(params, space)

    x0s = initial_points(space, config.seed, config.n_inits)
    cells = [(m, i) for m in config.methods for i in range(config.n_inits)]
    logging.info(f"Benchmark: {len(config.methods)} methods x {config.n_inits} inits, "
                 f"T={config.episode_length}, seed {config.seed}, jobs {jobs}")

    def one(cell):
        method, init = cell
        return _run_cell(method, init, x0s[init], objective, params, config)

    if jobs <= 1:
        results = [one(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, cells))

    summaries = {}
    for method in config.methods:
        rows = sorted((r for r in results if r.method == method), key=lambda r: r.init)
        summary = MethodSummary([r.best_f for r in rows], [r.evals for r in rows], [r.seconds for r in rows],
                                [r.best_x for r in rows])
        if truth is not None:
            scorer = truth.with_counter()
            summary.true_raw = [scorer.evaluate(x) for x in rows_to_vectors(rows)]
        summaries[method] = summary
        logging.info(f"{method}: median best f {summary.box.median:.6f}, mean {summary.mean_seconds:.4f}s per init")
    return BenchmarkReport(summaries, config.to_dict())


def rows_to_vectors(rows):
    return [TuningVector(tuple(float(v) for v in r.best_x)) for r in rows]


def report_frame(report: BenchmarkReport):
    """One row per (method, init) followed by the summary block of each method"""
    rows = []
    for method, summary in report.methods.items():
        for init, (f, evals, seconds) in enumerate(zip(summary.raw, summary.evals, summary.seconds)):
            rows.append({"method": method, "init": str(init), "best_f": f, "evals": evals, "seconds": seconds})
    for method, summary in report.methods.items():
        box = summary.box._asdict()
        for name in SUMMARY_ROWS:
            if name == "mean":
                rows.append({"method": method, "init": name, "best_f": float(np.mean(summary.raw)),
                             "evals": float(np.mean(summary.evals)), "seconds": summary.mean_seconds})
            else:
                rows.append({"method": method, "init": name, "best_f": box[name], "evals": None, "seconds": None})
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def emit_report(report: BenchmarkReport, fmt, path):
    if fmt == "json":
        write_json(path, report.to_dict())
    elif fmt == "csv":
        try:
            report_frame(report).to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            raise ArtifactIOError(f"cannot write {path}: {e}")
    else:
        raise InvalidInputError(f"unknown report format {fmt!r}")
    logging.info(f"Wrote {fmt} benchmark report to {path}")


def raw_from_csv(path):
    """Per-method best_f values of the (method, init) rows of a report CSV"""
    frame = pd.read_csv(path, dtype={"init": str})
    per_init = frame[~frame["init"].isin(SUMMARY_ROWS)]
    raw = {}
    for method, group in per_init.groupby("method", sort=False):
        ordered = group.assign(init=group["init"].astype(int)).sort_values("init")
        raw[method] = [float(v) for v in ordered["best_f"]]
    return raw


def summary_table(report: BenchmarkReport):
    rows = []
    for method, summary in report.methods.items():
        box = summary.box
        row = [method, f"{box.median:.6f}", f"{box.iqr:.6f}", f"{summary.mean_seconds:.4f}",
               f"{np.mean(summary.evals):.1f}"]
        if summary.true_raw is not None:
            row.append(f"{np.median(summary.true_raw):.6f}")
        rows.append(row)
    headers = ["Method", "Median best f", "IQR", "Mean seconds", "Evals"]
    if any(s.true_raw is not None for s in report.methods.values()):
        headers.append("Median true f")
    return tabulate(rows, headers=headers, tablefmt="grid")
