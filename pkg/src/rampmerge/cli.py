"""Command-line front end: simulate, batch, synth, validate-solver, dump-config."""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click

from .config import ConfigError, load_run_config
from .lanes import MapSchemaError, MapValidationError, load_map
from .scenario import (
    ScenarioError,
    batch_run,
    load_scenario,
    run as run_sim,
    synth_scenario,
    write_scenario,
)
from .toys import run_solver_validation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2
EXIT_TIMEOUT = 3

_TEMPLATE_ALIASES = {
    "platoon": "platoon_merge",
    "platoon_merge": "platoon_merge",
    "fast": "fast_adjacent",
    "fast_adjacent": "fast_adjacent",
}


def _fail(message: str, code: int = EXIT_USAGE):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_inputs(config, scenario, map_path):
    try:
        run_cfg = load_run_config(config)
        scn = load_scenario(scenario, model_cfg=run_cfg.model)
        if map_path:
            scn.lane_map = load_map(map_path)
            scn.map_path = str(map_path)
        return run_cfg, scn
    except (FileNotFoundError, ConfigError, ScenarioError,
            MapSchemaError, MapValidationError) as exc:
        _fail(str(exc))


@click.group()
def main():
    """Belief-tree merging planner: simulation and validation tools."""


@main.command()
@click.option("--scenario", required=True, type=click.Path(), help="Scenario JSON file.")
@click.option("--config", type=click.Path(), default=None, help="TOML config file.")
@click.option("--map", "map_path", type=click.Path(), default=None,
              help="Override the scenario's map file.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default="out", show_default=True,
              help="Output directory for the trajectory CSV and summary JSON.")
def simulate(scenario, config, map_path, seed, out):
    """Run one closed-loop episode and write its trajectory."""
    run_cfg, scn = _load_inputs(config, scenario, map_path)
    result = run_sim(scn, run_cfg.solver, run_cfg.model, seed=seed)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.to_csv(out_dir / "trajectory.csv")
    summary = {
        "outcome": result.outcome,
        "merge_time": result.merge_time,
        "min_gap": result.min_gap if math.isfinite(result.min_gap) else None,
        "steps": len(result.steps),
        "seed": seed,
        "label": result.label,
        "belief_resets": result.belief_resets,
        "error": result.error,
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=1) + "\n")
    click.echo(f"outcome: {result.outcome} (steps: {len(result.steps)})")
    if result.outcome == "merged":
        sys.exit(EXIT_OK)
    if result.outcome == "timeout":
        sys.exit(EXIT_TIMEOUT)
    sys.exit(EXIT_FAILED)


@main.command()
@click.option("--scenario", type=click.Path(), default=None,
              help="Scenario JSON file (alternative to --template).")
@click.option("--template", default=None,
              help="Built-in template: platoon | fast_adjacent.")
@click.option("--config", type=click.Path(), default=None)
@click.option("--runs", type=int, default=30, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Base seed; run i uses seed + i.")
@click.option("--template-seed", type=int, default=0, show_default=True,
              help="Seed for synthesizing the template scenario.")
@click.option("--out", type=click.Path(), default="out", show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--min-success", type=float, default=0.0, show_default=True,
              help="Exit nonzero when the merge rate falls below this.")
def batch(scenario, template, config, runs, seed, template_seed, out,
          jobs, min_success):
    """Run a seeded batch and write per-run CSVs plus an aggregate summary."""
    if (scenario is None) == (template is None):
        _fail("provide exactly one of --scenario or --template")
    try:
        run_cfg = load_run_config(config)
        if template is not None:
            name = _TEMPLATE_ALIASES.get(template)
            if name is None:
                _fail(f"unknown template {template!r}")
            scn = synth_scenario(name, seed=template_seed,
                                 model_cfg=run_cfg.model)
        else:
            scn = load_scenario(scenario, model_cfg=run_cfg.model)
    except (FileNotFoundError, ConfigError, ScenarioError,
            MapSchemaError, MapValidationError) as exc:
        _fail(str(exc))
    if runs < 1:
        _fail("--runs must be >= 1")
    report = batch_run(scn, runs, seed, run_cfg.solver, run_cfg.model,
                       jobs=jobs)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, result in enumerate(report.results):
        if result is not None:
            result.to_csv(out_dir / f"run_{i:03d}.csv")
    (out_dir / "batch_summary.json").write_text(report.summary_json())
    summary = report.summary()
    click.echo(f"merged {summary['outcomes']['merged']}/{runs}, "
               f"collisions {summary['collisions']}")
    sys.exit(EXIT_OK if summary["success_rate"] >= min_success else EXIT_FAILED)


@main.command()
@click.option("--template", required=True,
              help="Built-in template: platoon | fast_adjacent.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default="out", show_default=True)
@click.option("--stem", default="scenario", show_default=True,
              help="Base name for the written files.")
def synth(template, seed, out, stem):
    """Materialize a template scenario (and its map) to files."""
    name = _TEMPLATE_ALIASES.get(template)
    if name is None:
        _fail(f"unknown template {template!r}")
    scn = synth_scenario(name, seed=seed)
    scen_file, map_file = write_scenario(scn, out, stem=stem)
    click.echo(f"wrote {scen_file} and {map_file}")
    sys.exit(EXIT_OK)


@main.command("validate-solver")
@click.option("--episodes", type=int, default=1000, show_default=True)
@click.option("--rollouts", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def validate_solver(episodes, rollouts, seed, as_json):
    """Cross-check the planner against exact oracles and formula references."""
    checks = run_solver_validation(episodes=episodes, rollouts=rollouts,
                                   seed=seed)
    all_passed = all(c.passed for c in checks)
    if as_json:
        click.echo(json.dumps(
            {"passed": all_passed,
             "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail}
                        for c in checks]},
            sort_keys=True, indent=1))
    else:
        width = max(len(c.name) for c in checks)
        for c in checks:
            status = "PASS" if c.passed else "FAIL"
            click.echo(f"{c.name:<{width}}  {status}  {c.detail}")
    sys.exit(EXIT_OK if all_passed else EXIT_FAILED)


@main.command("dump-config")
@click.option("--config", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def dump_config(config, as_json):
    """Print the effective parameter set (defaults plus overrides)."""
    try:
        run_cfg = load_run_config(config)
    except (FileNotFoundError, ConfigError) as exc:
        _fail(str(exc))
    dumped = run_cfg.dump()
    if as_json:
        click.echo(json.dumps(dumped, sort_keys=True, indent=1))
    else:
        for section, entries in dumped.items():
            click.echo(f"[{section}]")
            for key, value in entries.items():
                click.echo(f"{key} = {value!r}")
            click.echo("")


if __name__ == "__main__":
    main()
