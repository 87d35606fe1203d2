"""Command-line front end.

Thin client over the runner layer: parse one declarative config document,
execute the requested stage, write deterministic artifacts under the
output directory and exit 0 only when every requested check passed and
all outputs were written.

    fvqsd check      --config model.yaml
    fvqsd qsd        --config model.yaml --out results/
    fvqsd fv         --config run.yaml   --seed 7
    fvqsd experiment --config exp.yaml   --threads 4
    fvqsd serve      --host 127.0.0.1 --port 8000
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from .config import ConfigDocument, load_config
from .errors import ConfigError, ConvergenceError, ModelDefinitionError
from .experiments import _canon, emit
from . import runner


def _load(config_path: str, seed, threads, out) -> ConfigDocument:
    doc = load_config(config_path)
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if threads is not None:
        updates["threads"] = threads
    if out is not None:
        updates["out_dir"] = out
    if updates:
        doc = doc.model_copy(
            update={"runtime": doc.runtime.model_copy(update=updates)}
        )
    return doc


def _out_dir(doc: ConfigDocument) -> Path:
    out = Path(doc.runtime.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def common_options(fn):
    @functools.wraps(fn)
    def guarded(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ModelDefinitionError) as err:
            click.echo(str(err), err=True)
            sys.exit(2)

    for option in (
        click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="override runtime.out_dir"),
        click.option("--threads", type=click.IntRange(min=1), default=None,
                     help="override runtime.threads (never changes results)"),
        click.option("--seed", type=click.IntRange(min=0), default=None,
                     help="override runtime.seed"),
        click.option("--config", "config_path", required=True,
                     type=click.Path(exists=True, dir_okay=False),
                     help="configuration document (YAML or JSON)"),
    ):
        guarded = option(guarded)
    return guarded


@click.group()
def main():
    """Fleming-Viot / quasi-stationary distribution toolkit."""


@main.command()
@common_options
def check(config_path, seed, threads, out):
    """Evaluate the drift certificate and rate criteria of a model."""
    doc = _load(config_path, seed, threads, out)
    result = runner.run_check(doc)
    for crit in result.criteria:
        values = ", ".join(f"{v:.6g}" for v in crit.values)
        extra = f" delta={crit.delta:g}" if crit.delta is not None else ""
        click.echo(f"criterion {crit.name}: {crit.verdict}{extra} [{values}]")
    if result.certificate is not None:
        c = result.certificate
        click.echo(
            f"certificate: V={c.family} lambda1={c.lambda1:.6g} C={c.C:.6g} "
            f"kappa_sup={c.kappa_sup:.6g} min_particles={c.min_particles}"
        )
        click.echo(f"drift check: max slack {c.verdict.max_slack:.3e} "
                   f"over {c.verdict.states_checked} states")
    if result.message:
        click.echo(f"diagnostic: {result.message}")
    out_path = _out_dir(doc) / "check_report.json"
    out_path.write_text(_canon(result.model_dump()) + "\n", encoding="utf-8")
    click.echo(result.status)
    sys.exit(0 if result.status == "PASS" else 1)


@main.command()
@common_options
def qsd(config_path, seed, threads, out):
    """Solve the QSD oracle and write the (state, nu, eta) table."""
    doc = _load(config_path, seed, threads, out)
    try:
        result, table = runner.run_qsd(doc)
    except ConvergenceError as err:
        click.echo(f"oracle did not converge: {err}", err=True)
        sys.exit(1)
    h = result.header
    gamma = "absent" if h.gamma is None else f"{h.gamma:.6g}"
    click.echo(
        f"lambda0={h.lambda0:.6g} gamma={gamma} residual={h.residual:.3e} "
        f"truncation={h.truncation_size} outflow_max={h.truncation_outflow_max:.6g}"
    )
    path = _out_dir(doc) / "qsd_solution.csv"
    emit(table, "csv", path)
    click.echo(f"wrote {path}")
    sys.exit(0)


@main.command()
@common_options
def fv(config_path, seed, threads, out):
    """Run one particle ensemble and write its snapshots."""
    doc = _load(config_path, seed, threads, out)
    result, table = runner.run_fv(doc)
    click.echo(
        f"n={result.n} horizon={result.horizon:g} rebirths={result.rebirth_count} "
        f"snapshots={len(result.snapshots)}"
    )
    path = _out_dir(doc) / "fv_snapshots.csv"
    emit(table, "csv", path)
    click.echo(f"wrote {path}")
    sys.exit(0)


@main.command()
@common_options
def experiment(config_path, seed, threads, out):
    """Run the configured experiment and write csv + json tables."""
    doc = _load(config_path, seed, threads, out)
    table = runner.run_experiment(doc)
    out_path = _out_dir(doc)
    csv_path = out_path / f"experiment_{table.kind}.csv"
    json_path = out_path / f"experiment_{table.kind}.json"
    emit(table, "csv", csv_path)
    emit(table, "json", json_path)
    click.echo(f"{table.kind}: {len(table.rows)} rows")
    for key in ("gamma_hat", "alpha_hat", "alpha_theory", "time_average", "bound", "passed", "d0_hat"):
        if key in table.meta and table.meta[key] is not None:
            value = table.meta[key]
            click.echo(f"  {key} = {value:.6g}" if isinstance(value, float) else f"  {key} = {value}")
    click.echo(f"wrote {csv_path} and {json_path}")
    passed = table.meta.get("passed", True)
    sys.exit(0 if passed else 1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Serve the HTTP API wrapping the same runner layer."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":  # pragma: no cover
    main()
