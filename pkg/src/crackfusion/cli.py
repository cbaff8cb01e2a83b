"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 invalid input or usage, 3 numerical failure. Errors
are also written to stderr as a single JSON object.
"""
from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from . import pipeline
from .config import load_config
from .errors import NumericalError, ValidationError

EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def _layout(ctx: click.Context) -> pipeline.Layout:
    return ctx.obj["layout"]


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="TOML pipeline config.")
@click.option("--seed", type=int, default=None, help="Overrides every configured seed.")
@click.option("--out", type=click.Path(file_okay=False), default="run", show_default=True,
              help="Output directory for all stage files.")
@click.pass_context
def cli(ctx, config_path, seed, out):
    """Hybrid crack-growth prognosis: signals -> features -> network -> particle filter."""
    cfg = load_config(config_path)
    if seed is not None:
        cfg = dataclasses.replace(
            cfg,
            train=dataclasses.replace(cfg.train, seed=seed),
            pf=dataclasses.replace(cfg.pf, seed=seed),
        )
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ctx.obj = {"layout": pipeline.Layout(out, cfg), "seed": 0 if seed is None else seed}


@cli.command()
@click.pass_context
def simulate(ctx):
    """Write a synthetic dataset (manifest, signal CSVs, hidden truth)."""
    ds = pipeline.simulate(_layout(ctx), ctx.obj["seed"])
    click.echo(f"wrote {len(ds.tests)} tests to {_layout(ctx).dataset}")


@cli.command()
@click.pass_context
def denoise(ctx):
    """Select the band and compare raw vs bandpass baseline correlation."""
    r = pipeline.denoise(_layout(ctx))
    click.echo(f"band {r['band'].low_hz:.0f}-{r['band'].high_hz:.0f} Hz; "
               f"mean correlation raw {r['raw']:.4f} -> bandpass {r['bandpass']:.4f}")


@cli.command()
@click.pass_context
def windows(ctx):
    """Locate the two correlated windows in every received signal."""
    rows = pipeline.windows(_layout(ctx))
    click.echo(f"located windows for {len(rows)} measurements")


@cli.command()
@click.pass_context
def features(ctx):
    """Extract (rho, delta_phase, energy_ratio, entropy) for every signal pair."""
    rows = pipeline.features(_layout(ctx))
    click.echo(f"wrote {len(rows)} feature rows to {_layout(ctx).features}")


@cli.command("fit-paris")
@click.pass_context
def fit_paris_cmd(ctx):
    """Fit per-test Paris parameters, plate width and the growth-path distribution."""
    doc = pipeline.fit_paris_stage(_layout(ctx))
    b = doc["b_mm"]
    click.echo(f"fitted {len(doc['per_test'])} tests; b = {'inf' if b is None else f'{b:.3f}'} mm")


@cli.command()
@click.pass_context
def train(ctx):
    """Train the feature-to-crack-length network on training tests."""
    _, _, hist = pipeline.train_stage(_layout(ctx))
    click.echo(f"trained {len(hist) - 1} epochs; cost {hist[0]:.4g} -> {min(hist):.4g}")


@cli.command()
@click.option("--test", "test_ids", multiple=True, help="Test id (repeatable); default: validation tests.")
@click.pass_context
def predict(ctx, test_ids):
    """Filter the network estimates and forecast the remaining cycles."""
    for side in pipeline.predict_stage(_layout(ctx), test_ids):
        click.echo(f"{side['test']}: curve {side['selected_curve']}, refit {side['refit']}, "
                   f"noise ({side['process_noise_std']}, {side['obs_noise_std']})")


@cli.command()
@click.pass_context
def evaluate(ctx):
    """Score predictions against the dataset truth file."""
    rep = pipeline.evaluate_stage(_layout(ctx))
    for s in rep.tests:
        click.echo(f"{s.test}: RMSE {s.rmse:.4f} mm, penalized score {s.penalized_score:.4f}")


@cli.command("plot-data")
@click.pass_context
def plot_data(ctx):
    """Export a tidy CSV of every available curve for external plotting."""
    n = pipeline.plot_data(_layout(ctx))
    click.echo(f"wrote {n} rows to {_layout(ctx).plot_data}")


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="crackfusion", standalone_mode=False)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc))
    except NumericalError as exc:
        return _fail(EXIT_NUMERIC, "numerical", str(exc))
    except click.exceptions.Abort:
        return _fail(EXIT_VALIDATION, "aborted", "aborted")
    except click.ClickException as exc:
        return _fail(EXIT_VALIDATION, "usage", exc.format_message())
    return 0


if __name__ == "__main__":
    sys.exit(main())
