"""
``mcpst`` command line: training, adaptation, forecasting, evaluation,
validation, synthetic data and plot-data export.

CSV goes to ``--out`` or stdout; logs and tables go to stderr.
"""

import functools
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd
import torch

from config.settings import RunConfig, load_run_config, settings
from dataio.dataset import CityData, prepare_city
from dataio.series import ZScore, load_series
from dataio.synth import (
    city_directories,
    load_city,
    load_synth_spec,
    synth_cities,
    synth_generate,
    write_city,
)
from dataio.windows import SPLIT_MODES
from graphcore.network import load_adjacency_csv
from metalearn.episodes import ScenarioPool, sample_episode
from metalearn.schedule import (
    TRAIN_LOG_COLUMNS,
    holdout_split,
    train_stage,
    two_stage_train,
    write_training_log,
)
from metalearn.trainer import MetaConfig, adaptation_curve, meta_train
from predict.metrics import DEFAULT_STEPS, metrics, metrics_frame, parse_steps
from predict.model import (
    MCPSTModel,
    build_model,
    data_stats,
    forecast_windows,
    load_model,
    physics_summary,
    save_model,
)
from syncengine.engine import order_parameter
from utils.errors import ConfigError, InsufficientDataError, MCPSTError
from utils.logger import get_logger, setup_logger
from utils.rng import XorShiftRNG
from validation.checks import run_suite

logger = get_logger(__name__)

CSV_OPTIONS = {"index": False, "lineterminator": "\n", "float_format": "%.10g"}

ABLATION_VARIANTS: Dict[str, Dict[str, bool]] = {
    "full": {},
    "no_diffusion": {"use_diffusion": False},
    "no_sync": {"use_sync": False},
    "no_spectral": {"use_spectral": False},
    "no_multiscale": {"use_multiscale": False},
    "no_adaptive_fusion": {"use_adaptive_fusion": False},
    "no_diffusion_sync": {"use_diffusion": False, "use_sync": False},
    "no_diffusion_spectral": {"use_diffusion": False, "use_spectral": False},
    "no_sync_spectral": {"use_sync": False, "use_spectral": False},
}

EXPORT_KINDS = ("alpha", "order", "phases", "physics", "adaptation")
PARTS = ("train", "val", "adapt", "test", "all")

existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)
existing_dir = click.Path(exists=True, file_okay=False, path_type=Path)
output_path = click.Path(dir_okay=False, path_type=Path)


# ========================================
# Shared plumbing
# ========================================


def handle_errors(func):
    """Turn library errors into a logged message and exit code 1."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (MCPSTError, OSError) as exc:
            logger.error(str(exc))
            raise click.exceptions.Exit(1) from exc

    return wrapper


def config_options(func):
    """--config, --seed and repeated --set KEY=VALUE overrides."""
    func = click.option(
        "--set",
        "assignments",
        multiple=True,
        metavar="KEY=VALUE",
        help="Override one config key; wins over --config.",
    )(func)
    func = click.option(
        "--seed", type=int, default=None, help="Run seed; wins over config and MCPST_SEED."
    )(func)
    func = click.option(
        "--config",
        "config_path",
        type=existing_file,
        default=None,
        help="Flat key = value config file.",
    )(func)
    return func


def graph_options(func):
    func = click.option(
        "--adjacency",
        type=existing_file,
        required=True,
        help="Adjacency CSV with header src,dst,weight.",
    )(func)
    func = click.option(
        "--series",
        type=existing_file,
        required=True,
        help="Series CSV: timestamp column then one column per node.",
    )(func)
    return func


def parse_assignments(assignments: Sequence[str]) -> Dict[str, str]:
    values = {}
    for item in assignments:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value.strip()
    return values


def run_config(
    config_path: Optional[Path], seed: Optional[int], assignments: Sequence[str]
) -> RunConfig:
    overrides: Dict[str, Any] = parse_assignments(assignments)
    if seed is not None:
        overrides["seed"] = seed
    return load_run_config(config_path, overrides)


def load_graph_city(
    series_path: Path,
    adjacency_path: Path,
    cfg: RunConfig,
    mode: str = "single",
    stats: Optional[ZScore] = None,
) -> CityData:
    series = load_series(series_path)
    network = load_adjacency_csv(
        adjacency_path, n_nodes=series.n_nodes, symmetrize=not cfg.keep_directed
    )
    return prepare_city(network, series, cfg, mode, stats)


def load_for_inference(
    model_path: Path, series_path: Path, adjacency_path: Path, mode: str = "single"
) -> Tuple[MCPSTModel, CityData]:
    model, state = load_model(model_path)
    stats = ZScore(*data_stats(state))
    return model, load_graph_city(series_path, adjacency_path, model.cfg, mode, stats)


def part_windows(city: CityData, part: str):
    return city.all_windows() if part == "all" else city.windows(part)


def emit_csv(frame: pd.DataFrame, out: Optional[Path]) -> None:
    """Write to ``out`` or stdout."""
    if out is None:
        click.echo(frame.to_csv(**CSV_OPTIONS), nl=False)
    else:
        frame.to_csv(out, **CSV_OPTIONS)
        logger.info(f"Wrote {len(frame)} rows to {out}")


def stats_of(city: CityData) -> Tuple[float, float]:
    return city.stats.mean, city.stats.std


def evaluate_city(
    model: MCPSTModel, city: CityData, part: str, steps: Sequence[int]
) -> pd.DataFrame:
    """Denormalized MAE/RMSE per step over the windows of ``part``."""
    result = forecast_windows(model, part_windows(city, part), city.context, model.cfg.batch_size)
    rows = metrics(
        city.stats.denormalize(result.y_hat),
        city.stats.denormalize(result.y),
        steps,
        city.series.interval_minutes,
    )
    return metrics_frame(rows)


# ========================================
# Commands
# ========================================


@click.group()
@click.option(
    "--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default MCPST_LOG_LEVEL)."
)
def cli(log_level: Optional[str]):
    """MCPST multi-phase consensus traffic forecasting."""
    settings.create_directories()
    if log_level:
        setup_logger(log_level=log_level)


@cli.command()
@config_options
@graph_options
@click.option(
    "--target-series",
    type=existing_file,
    default=None,
    help="Target city series for fine-tuning.",
)
@click.option("--target-adjacency", type=existing_file, default=None, help="Target city adjacency.")
@click.option("--out", type=output_path, required=True, help="Model file to write.")
@click.option(
    "--log",
    "log_path",
    type=output_path,
    default=None,
    help="Training log CSV (default: <out>.train.csv).",
)
@handle_errors
def train(
    config_path,
    seed,
    assignments,
    series,
    adjacency,
    target_series,
    target_adjacency,
    out,
    log_path,
):
    """Pre-train on a city, optionally fine-tune on a target city."""
    cfg = run_config(config_path, seed, assignments)
    if (target_series is None) != (target_adjacency is None):
        raise ConfigError("--target-series and --target-adjacency must be given together")
    target = None
    if target_series is not None:
        source = load_graph_city(series, adjacency, cfg, "source")
        target = load_graph_city(target_series, target_adjacency, cfg, "target")
    else:
        source = load_graph_city(series, adjacency, cfg, "single")
    model = build_model(cfg)
    log_path = log_path or out.with_suffix(".train.csv")
    result = two_stage_train(
        model, source, target, cfg, XorShiftRNG(cfg.resolved_seed()), log_path
    )
    save_model(model, out, result.optimizer, stats_of(target or source))
    logger.info(f"Saved model to {out}; training log {log_path}")


@cli.command("meta-train")
@config_options
@click.option(
    "--cities", type=existing_dir, required=True, help="Directory of city_* subdirectories."
)
@click.option("--out", type=output_path, required=True, help="Model file to write.")
@click.option(
    "--log",
    "log_path",
    type=output_path,
    default=None,
    help="Episode log CSV (default: <out>.meta.csv).",
)
@handle_errors
def meta_train_command(config_path, seed, assignments, cities, out, log_path):
    """Episodic first-order meta-training over several cities."""
    cfg = run_config(config_path, seed, assignments)
    directories = city_directories(cities)
    prepared = []
    for directory in directories:
        network, series = load_city(directory)
        prepared.append(prepare_city(network, series, cfg, "single"))
    pool = ScenarioPool(prepared, "train", names=[d.name for d in directories])
    model = build_model(cfg)
    log_path = log_path or out.with_suffix(".meta.csv")
    opt, _ = meta_train(model, pool, cfg, XorShiftRNG(cfg.resolved_seed()), log_path)
    # normalization of the first city; adapt refits on the target
    save_model(model, out, opt, stats_of(prepared[0]))
    logger.info(f"Saved meta-trained model to {out}; episode log {log_path}")


@cli.command()
@click.option(
    "--model", "model_path", type=existing_file, required=True, help="Model file to adapt."
)
@graph_options
@click.option(
    "--days", type=float, default=None, help="Adaptation span in days (default: model config)."
)
@click.option(
    "--epochs", type=int, default=None, help="Fine-tuning epochs (default: model config)."
)
@click.option(
    "--lr", type=float, default=None, help="Fine-tuning learning rate (default: model config)."
)
@click.option("--seed", type=int, default=None, help="Run seed.")
@click.option("--out", type=output_path, required=True, help="Adapted model file.")
@click.option(
    "--log",
    "log_path",
    type=output_path,
    default=None,
    help="Fine-tuning log CSV (default: <out>.adapt.csv).",
)
@handle_errors
def adapt(model_path, series, adjacency, days, epochs, lr, seed, out, log_path):
    """Fine-tune a model on the first days of a target city."""
    model, _ = load_model(model_path)
    updates = {"adapt_days": days, "finetune_epochs": epochs, "finetune_lr": lr, "seed": seed}
    cfg = model.cfg.with_overrides(**{k: v for k, v in updates.items() if v is not None})
    model.cfg = cfg
    target = load_graph_city(series, adjacency, cfg, "target")
    adapt_part, held = holdout_split(target.windows("adapt"), cfg.val_fraction)
    stage = train_stage(
        model,
        adapt_part,
        held,
        target.context,
        cfg,
        "finetune",
        cfg.finetune_lr,
        cfg.finetune_epochs,
        XorShiftRNG(cfg.resolved_seed()).spawn(2),
    )
    log_path = log_path or out.with_suffix(".adapt.csv")
    write_training_log(pd.DataFrame(stage.records, columns=TRAIN_LOG_COLUMNS), log_path)
    save_model(model, out, stage.optimizer, stats_of(target))
    logger.info(f"Saved adapted model to {out}")


@cli.command()
@click.option("--model", "model_path", type=existing_file, required=True, help="Model file.")
@graph_options
@click.option(
    "--at",
    "at_index",
    type=int,
    default=None,
    help="First history step of the window (default: the latest full history).",
)
@click.option("--out", type=output_path, default=None, help="Forecast CSV (default: stdout).")
@handle_errors
def forecast(model_path, series, adjacency, at_index, out):
    """Forecast H steps for every node from one history window."""
    model, city = load_for_inference(model_path, series, adjacency)
    history = model.cfg.history
    n_steps = city.series.n_steps
    start = n_steps - history if at_index is None else at_index
    if not 0 <= start <= n_steps - history:
        raise InsufficientDataError(
            f"--at {start} needs steps {start}..{start + history - 1}, series has {n_steps}"
        )
    x = torch.tensor(city.inputs[start:start + history][None], dtype=torch.float64)
    model.eval()
    with torch.no_grad():
        output = model(x, city.context)
    y_hat = city.stats.denormalize(output.prediction[0].numpy())
    sigma2 = output.forecast.sigma2[0].numpy() * city.stats.std ** 2
    nodes, horizon = y_hat.shape
    frame = pd.DataFrame({
        "node": np.repeat(np.arange(nodes), horizon),
        "step": np.tile(np.arange(1, horizon + 1), nodes),
        "y_hat": y_hat.reshape(-1),
        "sigma2": sigma2.reshape(-1),
    })
    emit_csv(frame, out)


@cli.command()
@click.option("--model", "model_path", type=existing_file, required=True, help="Model file.")
@graph_options
@click.option(
    "--steps",
    default=",".join(map(str, DEFAULT_STEPS)),
    show_default=True,
    help="Comma-separated 1-based forecast steps.",
)
@click.option(
    "--mode",
    type=click.Choice(SPLIT_MODES),
    default="single",
    show_default=True,
    help="Split the series as a single city or as an adaptation target.",
)
@click.option(
    "--part",
    type=click.Choice(PARTS),
    default="test",
    show_default=True,
    help="Windows to score.",
)
@click.option("--out", type=output_path, default=None, help="Metrics CSV (default: stdout).")
@handle_errors
def evaluate(model_path, series, adjacency, steps, mode, part, out):
    """MAE and RMSE per forecast step in original units."""
    model, city = load_for_inference(model_path, series, adjacency, mode)
    emit_csv(evaluate_city(model, city, part, parse_steps(steps)), out)


@cli.command()
@click.option(
    "--seed", type=int, default=0, show_default=True, help="Seed for every randomized check."
)
@click.option(
    "--trials", type=int, default=100, show_default=True, help="Spectral truncation trials."
)
@click.option(
    "--draws", type=int, default=1000, show_default=True, help="Consensus random draws."
)
@click.option("--out", type=output_path, default=None, help="Report CSV (default: stdout).")
@handle_errors
def validate(seed, trials, draws, out):
    """Run the numerical validation suite; exit 1 when any check fails."""
    report = run_suite(seed=seed, trials=trials, draws=draws)
    report.render()
    emit_csv(report.to_frame(), out)
    if not report.passed:
        logger.error(f"{len(report.failures)} validation check(s) failed")
        raise click.exceptions.Exit(1)


@cli.command()
@click.option(
    "--spec", "spec_path", type=existing_file, default=None, help="Synthetic generator config."
)
@click.option(
    "--set",
    "assignments",
    multiple=True,
    metavar="KEY=VALUE",
    help="Override one generator key.",
)
@click.option("--seed", type=int, default=None, help="Generator seed; wins over --config.")
@click.option(
    "--cities",
    type=int,
    default=1,
    show_default=True,
    help="Number of cities; more than one writes city_* subdirectories.",
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Output directory (default: <MCPST_OUTPUT_DIR>/synth).",
)
@handle_errors
def synth(spec_path, assignments, seed, cities, out_dir):
    """Generate synthetic cities with known diffusion and synchronization physics."""
    overrides: Dict[str, Any] = parse_assignments(assignments)
    if seed is not None:
        overrides["seed"] = seed
    spec = load_synth_spec(spec_path, overrides)
    rng = XorShiftRNG(spec.seed if spec.seed is not None else settings.seed)
    out_dir = out_dir if out_dir is not None else settings.output_dir / "synth"
    if cities < 1:
        raise ConfigError(f"--cities must be at least 1, got {cities}")
    if cities == 1:
        network, traffic = synth_generate(spec, rng)
        write_city(out_dir, network, traffic, spec)
        logger.info(f"Wrote synthetic city to {out_dir}")
    else:
        synth_cities(spec, cities, out_dir, rng)


def alpha_frame(model: MCPSTModel, city: CityData, part: str) -> pd.DataFrame:
    result = forecast_windows(model, part_windows(city, part), city.context, model.cfg.batch_size)
    batch, nodes, _ = result.alpha.shape
    return pd.DataFrame({
        "window": np.repeat(result.starts, nodes),
        "node": np.tile(np.arange(nodes), batch),
        "a_diff": result.alpha[..., 0].reshape(-1),
        "a_sync": result.alpha[..., 1].reshape(-1),
        "a_spec": result.alpha[..., 2].reshape(-1),
    })


@torch.no_grad()
def phase_trajectories(
    model: MCPSTModel, city: CityData, part: str
) -> Tuple[np.ndarray, torch.Tensor]:
    """Window starts and wrapped phases after every synchronization step, K×B×N."""
    if not model.cfg.use_sync:
        raise ConfigError("the synchronization phase is disabled in this model")
    windows = part_windows(city, part)
    model.eval()
    chunks = []
    for start in range(0, len(windows), model.cfg.batch_size):
        batch = windows[start:start + model.cfg.batch_size]
        x = torch.tensor(np.stack([w.x for w in batch]), dtype=torch.float64)
        state = model(x, city.context, record_phases=True).phase_state
        chunks.append(torch.stack(state.history))
    return np.array([w.start_index for w in windows]), torch.cat(chunks, dim=1)


def order_frame(model: MCPSTModel, city: CityData, part: str) -> pd.DataFrame:
    starts, phases = phase_trajectories(model, city, part)
    r = order_parameter(phases).numpy()
    steps, batch = r.shape
    frame = pd.DataFrame({
        "window": np.tile(starts, steps),
        "step": np.repeat(np.arange(1, steps + 1), batch),
        "r": r.reshape(-1),
    })
    return frame.sort_values(["window", "step"], kind="stable", ignore_index=True)


def phases_frame(model: MCPSTModel, city: CityData, part: str) -> pd.DataFrame:
    starts, phases = phase_trajectories(model, city, part)
    values = phases.permute(1, 0, 2).numpy()
    batch, steps, nodes = values.shape
    return pd.DataFrame({
        "window": np.repeat(starts, steps * nodes),
        "step": np.tile(np.repeat(np.arange(1, steps + 1), nodes), batch),
        "node": np.tile(np.arange(nodes), batch * steps),
        "phase": values.reshape(-1),
    })


def adaptation_frame(
    model: MCPSTModel, city: CityData, part: str, steps: int, seed: int
) -> pd.DataFrame:
    cfg = MetaConfig.from_run_config(model.cfg)
    windows = part_windows(city, part)
    needed = cfg.support_size + cfg.query_size
    if len(windows) < needed:
        raise InsufficientDataError(
            f"--part {part} has {len(windows)} windows; the adaptation curve needs "
            f"support_size + query_size = {needed}. Pick a longer --part or a longer series"
        )
    rng = XorShiftRNG(seed)
    episode = sample_episode(windows, cfg.support_size, cfg.query_size, rng, "export", city.context)
    curve = adaptation_curve(model, episode, steps, cfg, rng.spawn(1))
    return pd.DataFrame({"step": np.arange(len(curve)), "query_mae": curve})


@cli.command()
@click.option("--model", "model_path", type=existing_file, required=True, help="Model file.")
@graph_options
@click.option(
    "--what", type=click.Choice(EXPORT_KINDS), required=True, help="Quantity to export."
)
@click.option(
    "--part",
    type=click.Choice(PARTS),
    default="test",
    show_default=True,
    help="Windows to export over.",
)
@click.option(
    "--steps",
    "adapt_steps",
    type=int,
    default=None,
    help="Inner steps for --what adaptation (default: eval_inner_steps).",
)
@click.option("--seed", type=int, default=None, help="Episode seed for --what adaptation.")
@click.option("--out", type=output_path, default=None, help="CSV file (default: stdout).")
@handle_errors
def export(model_path, series, adjacency, what, part, adapt_steps, seed, out):
    """Plot data: attention weights, order parameter, phases, physics or adaptation curve."""
    model, city = load_for_inference(model_path, series, adjacency)
    if what == "alpha":
        frame = alpha_frame(model, city, part)
    elif what == "order":
        frame = order_frame(model, city, part)
    elif what == "phases":
        frame = phases_frame(model, city, part)
    elif what == "physics":
        summary = physics_summary(model, city.context)
        frame = pd.DataFrame({"name": list(summary), "value": list(summary.values())})
    else:
        steps = model.cfg.eval_inner_steps if adapt_steps is None else adapt_steps
        episode_seed = model.cfg.resolved_seed() if seed is None else seed
        frame = adaptation_frame(model, city, part, steps, episode_seed)
    emit_csv(frame, out)


@cli.command()
@config_options
@graph_options
@click.option(
    "--steps",
    default=",".join(map(str, DEFAULT_STEPS)),
    show_default=True,
    help="Comma-separated 1-based forecast steps.",
)
@click.option(
    "--variants",
    default=",".join(ABLATION_VARIANTS),
    show_default=True,
    help="Comma-separated subset of variants to run.",
)
@click.option("--out", type=output_path, default=None, help="Ablation CSV (default: stdout).")
@handle_errors
def ablate(config_path, seed, assignments, series, adjacency, steps, variants, out):
    """Train and score the full model and each single-component ablation."""
    cfg = run_config(config_path, seed, assignments)
    requested = [name.strip() for name in variants.split(",") if name.strip()]
    unknown = sorted(set(requested) - set(ABLATION_VARIANTS))
    if unknown:
        raise ConfigError(
            f"unknown ablation variant(s) {unknown}; expected {list(ABLATION_VARIANTS)}"
        )
    city = load_graph_city(series, adjacency, cfg, "single")
    step_list = parse_steps(steps)
    frames = []
    for name in requested:
        variant_cfg = cfg.with_overrides(**ABLATION_VARIANTS[name])
        model = build_model(variant_cfg)
        logger.info(f"Ablation variant {name}")
        two_stage_train(model, city, None, variant_cfg, XorShiftRNG(variant_cfg.resolved_seed()))
        frame = evaluate_city(model, city, "test", step_list)
        frame.insert(0, "variant", name)
        frames.append(frame)
    emit_csv(pd.concat(frames, ignore_index=True), out)


if __name__ == "__main__":
    cli()
