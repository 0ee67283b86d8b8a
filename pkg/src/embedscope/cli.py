"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import hashlib
import sys
from pathlib import Path

import click
import numpy as np

from . import evaluation, formats
from .errors import EngineError, InvalidInput, UnknownProject
from .reducers import ReducerSpec
from .service import Config, serve as run_service
from .store import ProjectStore


@click.group()
def cli() -> None:
    """Explore, annotate, and evaluate embedding spaces."""


def _store(data_dir: str | None) -> ProjectStore:
    cfg = Config.from_env(data_dir=data_dir)
    return ProjectStore(cfg.data_dir)


data_dir_option = click.option(
    "--data-dir", default=None, help="Store directory (defaults to $DATA_DIR or ./data)."
)


@cli.command()
@click.option("--port", type=int, default=None, help="Listen port (defaults to $PORT or 8000).")
@click.option("--host", default="127.0.0.1", show_default=True)
@data_dir_option
@click.option("--provider-url", default=None, help="Remote embedding provider base URL.")
@click.option("--log-level", default=None, help="Log level (defaults to $LOG_LEVEL or info).")
@click.option("--ui-dir", default=None, help="Static UI directory served under /ui.")
def serve(port, host, data_dir, provider_url, log_level, ui_dir) -> None:
    """Run the HTTP service."""
    cfg = Config.from_env(
        port=port, data_dir=data_dir, provider_url=provider_url, log_level=log_level, ui_dir=ui_dir
    )
    cfg.host = host
    run_service(cfg)


@cli.command()
@click.argument("project")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@data_dir_option
def ingest(project, file, data_dir) -> None:
    """Ingest NDJSON or SPWK records into PROJECT (created if missing)."""
    store = _store(data_dir)
    rows = formats.sniff_ingest(Path(file).read_bytes())
    if not rows:
        raise InvalidInput(f"{file} contains no records")
    try:
        pid = store.resolve(project)
    except UnknownProject:
        dim = len(np.asarray(rows[0].vector).ravel())
        schema = list(dict.fromkeys(r.label for r in rows if r.label is not None))
        pid = store.create_project(project, dim, schema or ["unlabeled"]).project_id
        click.echo(f"created project {project} (dim={dim})", err=True)
    count = store.ingest(pid, rows)
    click.echo(f"ingested {count}")


@cli.command()
@click.argument("project")
@click.option("--reducer", default="hnne", show_default=True)
@click.option("--dims", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@data_dir_option
def fit(project, reducer, dims, seed, data_dir) -> None:
    """Fit a layout and print its id and coordinate checksum."""
    store = _store(data_dir)
    pid = store.resolve(project)
    layout = store.fit_layout(pid, ReducerSpec(name=reducer, out_dim=dims, seed=seed))
    checksum = hashlib.sha256(layout.coords.tobytes()).hexdigest()
    click.echo(f"{layout.layout_id} {checksum}")


@cli.command("eval")
@click.argument("project")
@click.option("--k", type=int, default=100, show_default=True, help="Retrieval depth.")
@click.option("--reducers", default="pca,hnne", show_default=True, help="Comma-separated reducer names.")
@click.option("--dims", default="2,3", show_default=True, help="Comma-separated output dims.")
@click.option("--seed", type=int, default=0, show_default=True)
@data_dir_option
def eval_cmd(project, k, reducers, dims, seed, data_dir) -> None:
    """Print the layout-quality report (CSV) for PROJECT."""
    store = _store(data_dir)
    pid = store.resolve(project)
    state = store.state(pid)
    labeled = [r for r in state.records if r.label_gt is not None and not r.is_foreign]
    if not labeled:
        raise InvalidInput("project has no ground-truth labels to evaluate")
    x = state.matrix.data[[r.ingest_order for r in labeled]]
    y = [state.project.label_schema[r.label_gt] for r in labeled]
    specs = [
        ReducerSpec(name=name.strip(), out_dim=int(d), seed=seed)
        for name in reducers.split(",")
        if name.strip()
        for d in dims.split(",")
    ]
    report = evaluation.layout_quality_report(x, y, specs, k_eval=k)
    click.echo(report.to_csv().decode("utf-8"), nl=False)


@cli.command()
@click.argument("project")
@click.option("--format", "fmt", type=click.Choice(["csv", "ndjson"]), default="csv", show_default=True)
@click.option("--include-foreign", is_flag=True, default=False)
@data_dir_option
def export(project, fmt, include_foreign, data_dir) -> None:
    """Write current annotations for PROJECT to stdout."""
    store = _store(data_dir)
    pid = store.resolve(project)
    sys.stdout.buffer.write(store.export_annotations(pid, fmt, include_foreign=include_foreign))


@cli.command()
@click.argument("project")
@click.argument("pool_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@data_dir_option
def inject(project, pool_file, seed, data_dir) -> None:
    """Inject 3-5 foreign records from POOL_FILE; print the injected ids."""
    store = _store(data_dir)
    pid = store.resolve(project)
    rows = formats.sniff_ingest(Path(pool_file).read_bytes())
    pool = [
        (
            np.asarray(r.vector, dtype=np.float32),
            {"id": r.record_id, "label": r.label, "modality": r.modality.value, "payload": r.payload},
        )
        for r in rows
    ]
    ids = evaluation.inject_corruption(store, pid, pool, seed=seed)
    for rid in ids:
        click.echo(rid)


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except EngineError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
