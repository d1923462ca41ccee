"""The acceptance suite: one or more named experiment configs per criterion."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

from .harness import ExperimentResult, default_config, emit_outputs, run_experiment

W = "drifted_brownian"


@dataclass(frozen=True)
class SuiteEntry:
    criterion: int
    label: str
    experiment_id: str
    overrides: tuple = ()

    def config(self, master_seed: int, scale: float, workers: int):
        cfg = default_config(self.experiment_id, scale=scale, **dict(self.overrides))
        if "scale" in cfg.params:
            # nested suite runs follow the outer scale
            cfg.params["scale"] = cfg.params["scale"] * scale
        cfg.master_seed = master_seed
        cfg.workers = workers
        return cfg


def _model(**kw):
    return (("model", kw),)


ACCEPTANCE = [
    SuiteEntry(1, "exp_moment_W0.5", "exp_moment_check", _model(kind=W, kappa=0.5)),
    SuiteEntry(1, "exp_moment_W1", "exp_moment_check", _model(kind=W, kappa=1.0)),
    SuiteEntry(1, "exp_moment_W2", "exp_moment_check", _model(kind=W, kappa=2.0)),
    SuiteEntry(1, "exp_moment_S1.5", "exp_moment_check", _model(kind="stable", alpha=1.5, scale=1.0, drift=1.0)),
    SuiteEntry(1, "exp_moment_S1.8", "exp_moment_check", _model(kind="stable", alpha=1.8, scale=1.0, drift=1.0)),
    SuiteEntry(1, "exp_moment_S2", "exp_moment_check", _model(kind="stable", alpha=2.0, scale=0.5, drift=1.0)),
    SuiteEntry(2, "kappa_root", "kappa_root"),
    SuiteEntry(3, "tail_W0.5", "exp_functional_tail", _model(kind=W, kappa=0.5)),
    SuiteEntry(3, "tail_W1.5", "exp_functional_tail", _model(kind=W, kappa=1.5)),
    SuiteEntry(4, "I_up_W0.3", "I_up_mean", _model(kind=W, kappa=0.3)),
    SuiteEntry(4, "I_up_W0.5", "I_up_mean", _model(kind=W, kappa=0.5)),
    SuiteEntry(4, "I_up_W0.8", "I_up_mean", _model(kind=W, kappa=0.8)),
    SuiteEntry(5, "R_laplace", "R_laplace_asymptotic"),
    SuiteEntry(6, "renewal_e", "renewal_e_law"),
    SuiteEntry(7, "first_valley_R", "first_valley_R"),
    SuiteEntry(8, "tail_constants", "renewal_tail_constants"),
    SuiteEntry(9, "gou_bridge", "gou_bridge"),
    SuiteEntry(10, "excursion_plateau", "excursion_tail_plateau"),
    SuiteEntry(11, "liminf_constants", "liminf_constants"),
    SuiteEntry(12, "exact_oracles", "exact_oracles"),
    SuiteEntry(13, "occupation_W2", "occupation_identity"),
    SuiteEntry(13, "occupation_W0.5", "occupation_identity",
               _model(kind=W, kappa=0.5) + (("r", 15.0), ("t_max", 200.0), ("replicas", 40))),
    SuiteEntry(14, "valley_spacing", "valley_spacing"),
    SuiteEntry(15, "integral_test", "integral_test"),
    SuiteEntry(16, "determinism", "determinism"),
]

TITLES = {
    1: "Laplace exponent consistency",
    2: "kappa root",
    3: "tail exponent of int exp(V)",
    4: "conditioned-process mean",
    5: "Laplace asymptotic of R",
    6: "renewal e_j law",
    7: "first-valley R limit",
    8: "renewal tail constants",
    9: "GOU bridge",
    10: "excursion-tail constant",
    11: "K, m, J constants",
    12: "exact oracles",
    13: "occupation identity",
    14: "valley spacing",
    15: "integral-test calculus",
    16: "determinism",
}


def tree_digest(root) -> str:
    """sha256 over relative paths and bytes of every file under root."""
    h = hashlib.sha256()
    base = Path(root)
    for p in sorted(base.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(base)).encode())
            h.update(b"\0")
            h.update(p.read_bytes())
    return h.hexdigest()


def run_entry(entry: SuiteEntry, master_seed: int, scale: float = 1.0, workers: int = 1) -> ExperimentResult:
    return run_experiment(entry.config(master_seed, scale, workers))


def summarize(results) -> dict[int, bool]:
    out: dict[int, bool] = {}
    for entry, res in results:
        out[entry.criterion] = out.get(entry.criterion, True) and res.passed
    return out


def summary_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("criterion", "label", "experiment_id", "passed", "row", "estimate", "target", "rule", "row_passed"))
    for entry, res in results:
        for r in res.rows:
            if r.role == "criterion":
                w.writerow((entry.criterion, entry.label, entry.experiment_id, res.passed, r.name, repr(float(r.estimate)),
                            "" if r.target is None else repr(float(r.target)), r.rule, r.passed))
    return buf.getvalue()


def format_line(criterion: int, passed: bool, results) -> str:
    parts = []
    for entry, res in results:
        if entry.criterion != criterion:
            continue
        for r in res.rows:
            if r.role == "criterion":
                target = "" if r.target is None else f" vs {r.target:.4g}"
                parts.append(f"{r.name}={r.estimate:.4g}{target}")
    status = "PASS" if passed else "FAIL"
    return f"[{status}] {criterion:2d} {TITLES[criterion]}: " + "; ".join(parts)


def run_suite(out_dir, master_seed: int = 20240601, scale: float = 1.0, workers: int = 1, skip=(), only=None,
              quiet: bool = False, echo=print):
    """Run the acceptance entries, writing <out_dir>/<label>/... and <out_dir>/summary.csv."""
    out = Path(out_dir)
    results = []
    for entry in ACCEPTANCE:
        if entry.criterion in skip or (only is not None and entry.criterion not in only):
            continue
        res = run_entry(entry, master_seed, scale, workers)
        emit_outputs(res, out / entry.label)
        results.append((entry, res))
        if not quiet:
            echo(f"  {entry.label}: {'pass' if res.passed else 'FAIL'} ({res.wall_time:.1f} s)")
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_bytes(summary_csv(results).encode("utf-8"))
    verdicts = summarize(results)
    if not quiet:
        for c in sorted(verdicts):
            echo(format_line(c, verdicts[c], results))
    return results, verdicts
