"""simlab command line."""

from __future__ import annotations

import sys

import click

from .harness import REGISTRY, ExperimentError, UnknownExperiment, _load_experiments, emit_outputs, load_config, run_experiment


@click.group()
def main():
    """Monte Carlo checks for diffusions in spectrally negative Levy environments."""


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="master seed (overrides the config)")
@click.option("--replicas", type=int, default=None, help="replica count (overrides the config)")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--workers", type=int, default=None)
def run_cmd(config_path, seed, replicas, out_dir, workers):
    """Run one experiment from a YAML/JSON config."""
    cfg = load_config(config_path)
    if seed is not None:
        cfg.master_seed = seed
    if replicas is not None:
        cfg.replicas = replicas
    if workers is not None:
        cfg.workers = workers
    out = out_dir or cfg.output_path or f"simlab_out/{cfg.experiment_id}"
    try:
        res = run_experiment(cfg)
    except (UnknownExperiment, ExperimentError) as err:
        raise click.ClickException(str(err)) from err
    try:
        emit_outputs(res, out)
    except OSError as err:
        raise click.ClickException(f"cannot write outputs to {out}: {err}") from err
    for r in res.rows:
        mark = {True: "pass", False: "FAIL", None: "    "}[r.passed]
        target = "" if r.target is None else f" (target {r.target:.6g}, {r.provenance})"
        click.echo(f"{mark}  {r.name}: {r.estimate:.6g}{target}")
    click.echo(f"{cfg.experiment_id}: {'PASS' if res.passed else 'FAIL'} in {res.wall_time:.1f} s -> {out}")


@main.command("list-experiments")
def list_cmd():
    """List registered experiments (criterion number in brackets)."""
    _load_experiments()
    for eid, exp in sorted(REGISTRY.items(), key=lambda kv: (kv[1].criterion or 99, kv[0])):
        tag = f"[{exp.criterion:2d}]" if exp.criterion else "[  ]"
        click.echo(f"{tag} {eid}: {exp.description}")


@main.command("verify")
@click.option("--suite", type=click.Choice(["acceptance"]), default="acceptance")
@click.option("--seed", type=int, default=20240601, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="simlab_out/acceptance", show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True, help="multiply replica counts (quick runs < 1)")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--only", type=str, default=None, help="comma-separated criterion numbers")
def verify_cmd(suite, seed, out_dir, scale, workers, only):
    """Run the acceptance criteria and print the pass table."""
    from .suite import run_suite

    chosen = None if only is None else {int(c) for c in only.split(",")}
    _, verdicts = run_suite(out_dir, seed, scale=scale, workers=workers, only=chosen, echo=click.echo)
    failed = [c for c, ok in verdicts.items() if not ok]
    click.echo(f"{len(verdicts) - len(failed)}/{len(verdicts)} criteria passed")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
