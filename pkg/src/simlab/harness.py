"""Experiment configs, result tables, the experiment registry and output files."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from .levy_env import LaplaceExponentModel, model_from_dict
from .seeding import rng_for, seed_derive, stream_seed

PROVENANCE = ("PAPER", "TRIVIAL", "DERIVED")
# criterion rows decide pass/fail; example rows are checked but reported separately; info rows carry no target
ROLES = ("criterion", "example", "info")
CSV_FIELDS = ("name", "estimate", "mc_error", "target", "provenance", "rule", "tolerance", "passed", "role", "note")


class UnknownExperiment(KeyError):
    pass


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    experiment_id: str
    model: dict | None = None
    params: dict = field(default_factory=dict)
    replicas: int = 1000
    master_seed: int = 20240601
    output_path: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")

    @property
    def env_model(self) -> LaplaceExponentModel:
        if self.model is None:
            raise ExperimentError(f"{self.experiment_id} needs a model block")
        return model_from_dict(self.model)

    def get(self, key, default=None):
        return self.params.get(key, default)

    def to_dict(self) -> dict:
        out = {"experiment_id": self.experiment_id, "master_seed": self.master_seed, "replicas": self.replicas}
        out.update(self.params)
        if self.model is not None:
            out["model"] = dict(self.model)
        if self.output_path is not None:
            out["output_path"] = self.output_path
        if self.workers != 1:
            out["workers"] = self.workers
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        try:
            eid = data.pop("experiment_id")
        except KeyError:
            raise ValueError("config needs an experiment_id") from None
        return cls(
            experiment_id=eid,
            model=data.pop("model", None),
            replicas=int(data.pop("replicas", 1000)),
            master_seed=int(data.pop("master_seed", 20240601)),
            output_path=data.pop("output_path", None),
            workers=int(data.pop("workers", 1)),
            params=data,
        )

    def result_dict(self) -> dict:
        # output location and worker count do not change results, so they stay out of result files
        d = self.to_dict()
        d.pop("output_path", None)
        d.pop("workers", None)
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.result_dict(), sort_keys=True).encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    """YAML or JSON: flat keys plus one nested model block."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    return ExperimentConfig.from_dict(data)


@dataclass
class Row:
    name: str
    estimate: float
    mc_error: float | None = None
    target: float | None = None
    provenance: str | None = None
    rule: str = "info"
    tolerance: float | None = None
    passed: bool | None = None
    role: str = "criterion"
    note: str = ""

    def __post_init__(self):
        self.estimate = float(self.estimate)
        self.passed = None if self.passed is None else bool(self.passed)
        if self.target is not None and self.provenance not in PROVENANCE:
            raise ValueError(f"row {self.name!r} has a target but provenance {self.provenance!r}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _close(est, target, tol, relative):
    if est is None or not math.isfinite(est):
        return False
    gap = abs(est - target)
    return gap <= tol * abs(target) if relative else gap <= tol


def rel_row(name, est, se, target, tol, provenance, role="criterion", note=""):
    return Row(name, est, se, target, provenance, "relative", tol, _close(est, target, tol, True), role, note)


def abs_row(name, est, se, target, tol, provenance, role="criterion", note=""):
    return Row(name, est, se, target, provenance, "absolute", tol, _close(est, target, tol, False), role, note)


def sigma_row(name, est, se, target, n_sigma, provenance, role="criterion", note=""):
    ok = se is not None and math.isfinite(est) and abs(est - target) <= n_sigma * se
    return Row(name, est, se, target, provenance, f"{n_sigma:g} mc-sigma", n_sigma, bool(ok), role, note)


def pvalue_row(name, p, threshold, provenance, role="criterion", note=""):
    return Row(name, p, None, None, provenance, "p-value >", threshold, bool(p > threshold), role, note)


def range_row(name, est, lo, hi, provenance, role="criterion", note=""):
    ok = math.isfinite(est) and lo <= est <= hi
    return Row(name, est, None, None, provenance, f"in [{lo:g}, {hi:g}]", None, bool(ok), role, note)


def info_row(name, est, se=None, note=""):
    return Row(name, est, se, role="info", note=note)


@dataclass
class ExperimentResult:
    experiment_id: str
    config: dict
    config_hash: str
    rows: list[Row]
    curves: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        checked = [r.passed for r in self.rows if r.role == "criterion"]
        return bool(checked) and all(checked)

    def row(self, name: str) -> Row:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        # wall_time stays out of the files so reruns are byte-identical
        return {
            "experiment_id": self.experiment_id,
            "config": self.config,
            "config_hash": self.config_hash,
            "passed": self.passed,
            "rows": [{k: (_num(getattr(r, k)) if k in ("estimate", "mc_error", "target", "tolerance")
                          else getattr(r, k)) for k in CSV_FIELDS} for r in self.rows],
            "curves": {k: {c: [_num(v) for v in vals] for c, vals in cols.items()} for k, cols in self.curves.items()},
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ExperimentResult":
        def back(x):
            return float(x) if isinstance(x, str) else x

        rows = [Row(**{k: (back(v) if k in ("estimate", "mc_error", "target", "tolerance") else v)
                       for k, v in r.items()}) for r in data["rows"]]
        curves = {k: {c: [back(v) for v in vals] for c, vals in cols.items()} for k, cols in data["curves"].items()}
        return cls(data["experiment_id"], data["config"], data["config_hash"], rows, curves)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def result_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in result.rows:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_FIELDS])
    return buf.getvalue()


def emit_outputs(result: ExperimentResult, out_dir, formats=("csv", "json", "plotdata")) -> list[Path]:
    """Write result.csv, result.json and plotdata/<curve>.dat under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        p = out / "result.csv"
        p.write_bytes(result_csv(result).encode("utf-8"))
        written.append(p)
    if "json" in formats:
        p = out / "result.json"
        p.write_bytes((json.dumps(result.to_json_dict(), indent=1, sort_keys=True) + "\n").encode("utf-8"))
        written.append(p)
    if "plotdata" in formats and result.curves:
        pd = out / "plotdata"
        pd.mkdir(exist_ok=True)
        for name, cols in sorted(result.curves.items()):
            keys = [k for k in ("x", "y", "yerr") if k in cols]
            lines = ["# " + " ".join(keys)]
            for vals in zip(*(cols[k] for k in keys)):
                lines.append(" ".join(repr(float(v)) for v in vals))
            p = pd / f"{name}.dat"
            p.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
            written.append(p)
    return written


# registry


@dataclass
class Experiment:
    experiment_id: str
    description: str
    run: Callable[[ExperimentConfig], tuple[list[Row], dict]]
    defaults: dict
    criterion: int | None = None
    scale_keys: tuple = ()


REGISTRY: dict[str, Experiment] = {}


def register(experiment_id, description, defaults, criterion=None, scale_keys=("replicas",)):
    def deco(fn):
        REGISTRY[experiment_id] = Experiment(experiment_id, description, fn, defaults, criterion, tuple(scale_keys))
        return fn
    return deco


def default_config(experiment_id: str, scale: float = 1.0, **overrides) -> ExperimentConfig:
    """Registry defaults, with count-like keys multiplied by scale (at least 1 after scaling)."""
    _load_experiments()
    if experiment_id not in REGISTRY:
        raise UnknownExperiment(experiment_id)
    exp = REGISTRY[experiment_id]
    data = copy.deepcopy(exp.defaults)
    data["experiment_id"] = experiment_id
    if scale != 1.0:
        for key in exp.scale_keys:
            if key in data:
                data[key] = max(_minimum(key), int(round(data[key] * scale)))
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


def _minimum(key):
    # statistics below these counts are meaningless rather than just noisy
    return {"replicas": 50, "n_valleys": 30, "n_paths": 50}.get(key, 1)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    _load_experiments()
    if config.experiment_id not in REGISTRY:
        raise UnknownExperiment(config.experiment_id)
    exp = REGISTRY[config.experiment_id]
    start = time.perf_counter()
    try:
        rows, curves = exp.run(config)
    except (UnknownExperiment, ExperimentError):
        raise
    except Exception as err:
        raise ExperimentError(f"{config.experiment_id}: {type(err).__name__}: {err}") from err
    return ExperimentResult(config.experiment_id, config.result_dict(), config.config_hash(), rows, curves,
                            time.perf_counter() - start)


def _load_experiments():
    from . import experiments  # noqa: F401  (registers on import)


# block-seeded parallel map


def _call_block(args):
    fn, seed, n, kwargs = args
    return fn(n, np.random.default_rng(seed), **kwargs)


def map_blocks(fn, config: ExperimentConfig, label: str, n_total: int, block: int, **kwargs) -> list:
    """Run fn(n, rng, **kwargs) over consecutive blocks of n_total draws.

    Block k is seeded from (master_seed, label, k) alone, so the output does not depend on
    config.workers. fn must be a module-level function when workers > 1.
    """
    base = stream_seed(config.master_seed, label)
    jobs = []
    for k, start in enumerate(range(0, n_total, block)):
        jobs.append((fn, seed_derive(base, k), min(block, n_total - start), kwargs))
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_call_block, jobs))
    return [_call_block(j) for j in jobs]


def concat_blocks(fn, config, label, n_total, block, **kwargs) -> np.ndarray:
    return np.concatenate(map_blocks(fn, config, label, n_total, block, **kwargs))


def rng(config: ExperimentConfig, label: str) -> np.random.Generator:
    return rng_for(config.master_seed, label)
