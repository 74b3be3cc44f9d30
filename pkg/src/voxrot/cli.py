"""Command line front end.

Thin client over the operations layer: each subcommand parses flags, merges
them with an optional config file (explicit flags win), calls one op and
prints the JSON summary. `serve` starts the HTTP service on the same ops.

Exit codes: 2 for invalid requests (bad flags, bad config), 1 for runtime
failures (missing files, malformed pools, degenerate inputs).
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import ops
from .attacks import SCENARIOS, SIDES
from .config import ExperimentConfig, config_from_dict, load_config_file, merge_overrides
from .errors import InvalidSpec, VoxrotError


def _fail(exc: Exception) -> "click.ClickException":
    if isinstance(exc, InvalidSpec):
        return click.UsageError(str(exc))
    return click.ClickException(str(exc))


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (VoxrotError, OSError) as exc:
            raise _fail(exc) from exc

    return wrapper


def _echo_json(doc: dict) -> None:
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


def _load_base_config(config_path) -> ExperimentConfig:
    if config_path is None:
        return config_from_dict({})
    return load_config_file(config_path)


def _explicit(ctx: click.Context, *names: str) -> dict:
    """Parameters the user actually set on the command line."""
    out = {}
    for name in names:
        src = ctx.get_parameter_source(name)
        if src is not None and src.name == "COMMANDLINE":
            out[name] = ctx.params[name]
    return out


@click.group()
@click.version_option(package_name="voxrot")
def main() -> None:
    """Speaker embedding anonymization with orthogonal reflection stacks."""


@main.command("gen-data")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--speakers", type=int, default=40, show_default=True)
@click.option("--utterances", type=int, default=10, show_default=True)
@click.option("--dim", type=int, default=16, show_default=True)
@click.option("--sigma-between", type=float, default=1.0, show_default=True)
@click.option("--sigma-within", type=float, default=0.25, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--normalize/--no-normalize", default=False, show_default=True)
@click.option("--enroll-per-speaker", type=int, default=2, show_default=True)
@click.option("--trial-per-speaker", type=int, default=2, show_default=True)
@click.option("--csv", "emit_csv", is_flag=True, help="Also write a CSV copy.")
@click.pass_context
@handle_errors
def gen_data(ctx, config_path, out, emit_csv, **_flags) -> None:
    """Generate a synthetic embedding pool and write it as EMB1."""
    cfg = _load_base_config(config_path)
    explicit = _explicit(
        ctx,
        "speakers",
        "utterances",
        "dim",
        "sigma_between",
        "sigma_within",
        "seed",
        "normalize",
        "enroll_per_speaker",
        "trial_per_speaker",
    )
    cfg = merge_overrides(cfg, {"pool": explicit})
    _echo_json(ops.op_gen_data(cfg.pool.to_spec(), Path(out), cfg, emit_csv))


def _train_overrides(ctx: click.Context) -> dict:
    sections = {
        "train": (
            "seed",
            "iterations",
            "batch_size",
            "lr_min",
            "lr_max",
            "cycle_length",
            "optimizer",
        ),
        "stack": ("variant", "layers", "reflections", "form"),
        "loss": ("margin", "paired_margin", "scale", "lam", "cos_margin"),
    }
    merged = {}
    for section, names in sections.items():
        got = _explicit(ctx, *names)
        if got:
            merged[section] = got
    loss_variant = _explicit(ctx, "loss_variant")
    if loss_variant:
        merged.setdefault("loss", {})["variant"] = loss_variant["loss_variant"]
    return merged


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--pool", "pool_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=50, show_default=True)
@click.option("--iterations", type=int, default=2000, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--lr-min", type=float, default=1e-8, show_default=True)
@click.option("--lr-max", type=float, default=1e-3, show_default=True)
@click.option("--cycle-length", type=int, default=2000, show_default=True)
@click.option("--optimizer", type=click.Choice(["adam", "sgd"]), default="adam", show_default=True)
@click.option("--variant", type=click.Choice(["roh", "loh"]), default="roh", show_default=True)
@click.option("--layers", type=int, default=4, show_default=True)
@click.option("--reflections", type=int, default=8, show_default=True)
@click.option("--form", type=click.Choice(["simplified", "general"]), default="simplified", show_default=True)
@click.option("--loss", "loss_variant", type=click.Choice(["waam", "aam"]), default="waam", show_default=True, help="Classification loss variant.")
@click.option("--m1", "margin", type=float, default=0.2, show_default=True, help="Angular margin on the own class.")
@click.option("--m2", "paired_margin", type=float, default=0.2, show_default=True, help="Extra margin on the paired class.")
@click.option("--scale", type=float, default=30.0, show_default=True)
@click.option("--lambda", "lam", type=float, default=20.0, show_default=True, help="Weight of the pair-dissimilarity term.")
@click.option("--cos-margin", type=float, default=0.0, show_default=True)
@click.pass_context
@handle_errors
def train_cmd(ctx, config_path, pool_path, out_dir, **_flags) -> None:
    """Train a reflection-stack anonymizer on a pool's train split."""
    cfg = _load_base_config(config_path)
    cfg = merge_overrides(cfg, _train_overrides(ctx))
    pool = ops.resolve_pool(pool_path)
    _echo_json(ops.op_train(pool, cfg.to_train_config(), Path(out_dir), cfg))


@main.command("anonymize")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--pool", "pool_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--selection", is_flag=True, help="Use the far-speaker selection baseline.")
@click.option("--side", type=click.Choice(list(SIDES)), default="all", show_default=True)
@click.option("--n-far", type=int, default=200, show_default=True)
@click.option("--n-pick", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
@handle_errors
def anonymize_cmd(ctx, config_path, pool_path, out, model_path, selection, side, **_flags) -> None:
    """Anonymize a pool with a trained model or the selection baseline."""
    if (model_path is None) == (not selection):
        raise InvalidSpec("pass exactly one of --model or --selection")
    cfg = _load_base_config(config_path)
    got = _explicit(ctx, "n_far", "n_pick", "seed")
    cfg = merge_overrides(cfg, {"selection": got} if got else {})
    pool = ops.resolve_pool(pool_path)
    model = ops.load_model_file(model_path) if model_path else None
    sel = cfg.selection.to_selection() if selection else None
    _echo_json(ops.op_anonymize(pool, side, Path(out), cfg, model, sel))


@main.command("evaluate")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--pool", "pool_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--selection", is_flag=True)
@click.option("--n-far", type=int, default=200, show_default=True)
@click.option("--n-pick", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--calibration",
    type=click.Choice(["logistic", "moments"]),
    default="logistic",
    show_default=True,
)
@click.pass_context
@handle_errors
def evaluate_cmd(
    ctx, config_path, pool_path, out_dir, model_path, selection, calibration, **_flags
) -> None:
    """Voice-similarity matrices and distinctiveness for one anonymizer."""
    if (model_path is None) == (not selection):
        raise InvalidSpec("pass exactly one of --model or --selection")
    cfg = _load_base_config(config_path)
    got = _explicit(ctx, "n_far", "n_pick", "seed")
    cfg = merge_overrides(cfg, {"selection": got} if got else {})
    pool = ops.resolve_pool(pool_path)
    model = ops.load_model_file(model_path) if model_path else None
    sel = cfg.selection.to_selection() if selection else None
    _echo_json(
        ops.op_evaluate(pool, Path(out_dir), cfg, model, sel, calibration)
    )


@main.command("attack-sim")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--pool",
    "pool_specs",
    multiple=True,
    required=True,
    help="Pool file, optionally NAME=PATH; repeat for several subsets.",
)
@click.option(
    "--weight",
    "weights",
    type=float,
    multiple=True,
    help="One weight per --pool (defaults to equal weights).",
)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--kind", type=click.Choice(["ohnn", "selection"]), default="ohnn", show_default=True)
@click.option(
    "--scenario",
    "scenario_list",
    multiple=True,
    type=click.Choice(list(SCENARIOS)),
    help="Scenario to run; repeat to choose a subset (default all).",
)
@click.option("--user-seed", type=int, default=50, show_default=True)
@click.option("--attacker-seed", type=int, default=1986, show_default=True)
@click.option("--n-far", type=int, default=200, show_default=True)
@click.option("--n-pick", type=int, default=100, show_default=True)
@click.option("--selection-seed", type=int, default=0, show_default=True)
@click.option("--iterations", type=int, default=2000, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--variant", type=click.Choice(["roh", "loh"]), default="roh", show_default=True)
@click.option("--layers", type=int, default=4, show_default=True)
@click.option("--reflections", type=int, default=8, show_default=True)
@click.option(
    "--calibration",
    type=click.Choice(["logistic", "moments"]),
    default="logistic",
    show_default=True,
)
@click.pass_context
@handle_errors
def attack_sim(
    ctx, config_path, pool_specs, weights, out_dir, kind, scenario_list, calibration, **_flags
) -> None:
    """Attacker-knowledge EER suite over one or more pools."""
    cfg = _load_base_config(config_path)
    got = _explicit(ctx, "user_seed", "attacker_seed")
    attack_over = {"kind": kind, "calibration": calibration}
    attack_over.update(got)
    sel_over = _explicit(ctx, "n_far", "n_pick", "selection_seed")
    if "selection_seed" in sel_over:
        sel_over["seed"] = sel_over.pop("selection_seed")
    train_over = _explicit(ctx, "iterations", "batch_size")
    stack_over = _explicit(ctx, "variant", "layers", "reflections")
    over = {"attack": attack_over}
    if sel_over:
        over["selection"] = sel_over
    if train_over:
        over["train"] = train_over
    if stack_over:
        over["stack"] = stack_over
    cfg = merge_overrides(cfg, over)
    scenarios = list(scenario_list) if scenario_list else list(cfg.attack.scenarios)
    pools = []
    for i, spec in enumerate(pool_specs):
        if "=" in spec:
            name, _, path = spec.partition("=")
        else:
            name, path = f"pool{i}" if len(pool_specs) > 1 else "pool", spec
        pools.append((name, ops.resolve_pool(path)))
    wts = list(weights) if weights else [1.0] * len(pools)
    summary = ops.op_attack_sim(
        pools, wts, cfg.to_scenario_config(scenarios[0]), scenarios, Path(out_dir), cfg
    )
    _echo_json(summary)
    click.echo(ops.format_attack_table(summary))


@main.command("serve")
@click.option("--workspace", type=click.Path(file_okay=False), default=".", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@handle_errors
def serve(workspace, host, port) -> None:
    """Run the HTTP service (blocks until interrupted)."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(Path(workspace)), host=host, port=port)


if __name__ == "__main__":
    main(prog_name="voxrot")
