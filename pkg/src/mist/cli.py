"""Operator command line: ingest, fetch, report, and serve stores.

Exit codes: 0 success, 1 usage or I/O failure, 2 nothing ingestable,
3 hierarchy violation.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .convert import convert_series
from .errors import HierarchyViolation, MistError, NothingIngestable
from .formats import FormatKind
from .quality import evaluate_series
from .reports import render_efficiency, render_quality
from .store import Store
from .vectors import export_vectors

_FORMAT_CHOICE = click.Choice([kind.value for kind in FormatKind])


@click.group()
@click.option(
    "--store",
    "store_path",
    envvar="MIST_STORE",
    default="./mist-store",
    show_default=True,
    metavar="PATH",
    help="Store directory (env: MIST_STORE).",
)
@click.pass_context
def cli(ctx: click.Context, store_path: str) -> None:
    """Progressive, format-agnostic storage for medical image series."""
    ctx.obj = store_path


def _open_store(ctx: click.Context) -> Store:
    return Store.open(ctx.obj)


@cli.command()
@click.pass_context
def init(ctx: click.Context) -> None:
    """Create an empty store."""
    store = Store.create(ctx.obj)
    click.echo(f"initialized store at {store.root}")


@cli.command()
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.option("--format", "format_hint", type=_FORMAT_CHOICE, default=None,
              help="Skip signature detection and read PATH as this format.")
@click.pass_context
def ingest(ctx: click.Context, path: Path, format_hint: str | None) -> None:
    """Encode every series found under PATH into the store."""
    store = _open_store(ctx)
    hint = FormatKind(format_hint) if format_hint else None
    records, failures = store.ingest_all(path, hint)
    for record in records:
        state = "ingested" if record.created else "already stored"
        click.echo(
            f"{record.series_id}  {record.format.value}  "
            f"{record.num_slices} slice(s)  max level {record.max_level}  [{state}]"
        )
        for entry in record.ingest_report["files_excluded"]:
            click.echo(
                f"  excluded {entry['path']}: {entry['reason']} ({entry['detail']})",
                err=True,
            )
    for failed_path, error in failures:
        click.echo(f"failed {failed_path}: {error}", err=True)
    if not records:
        exclusions = []
        for _, error in failures:
            if isinstance(error, NothingIngestable):
                exclusions.extend(error.exclusions)
        raise NothingIngestable(f"nothing ingestable at {path}", exclusions)


@cli.command()
@click.argument("series_id")
@click.option("--format", "target", type=_FORMAT_CHOICE, required=True)
@click.option("--level", type=int, default=None,
              help="Resolution level, 1 = coarsest; omitted = lossless full.")
@click.option("-o", "--output", type=click.Path(path_type=Path), required=True,
              help="Directory to write the series files into.")
@click.pass_context
def get(ctx: click.Context, series_id: str, target: str, level: int | None,
        output: Path) -> None:
    """Materialise a stored series as files in a target format."""
    store = _open_store(ctx)
    converted = convert_series(store, series_id, FormatKind(target), level)
    output.mkdir(parents=True, exist_ok=True)
    for name, blob in converted.payloads:
        (output / name).write_bytes(blob)
        click.echo(f"wrote {output / name} ({len(blob)} bytes)")
    click.echo(
        f"level {converted.level}/{converted.max_level}, "
        f"{converted.bytes_read} codestream bytes read"
    )


@cli.command()
@click.option("--per-level", is_flag=True, help="One row per decodable level.")
@click.option("--csv", "as_csv", is_flag=True, help="Emit CSV instead of a table.")
@click.pass_context
def report(ctx: click.Context, per_level: bool, as_csv: bool) -> None:
    """Storage efficiency of everything in the store."""
    store = _open_store(ctx)
    click.echo(render_efficiency(store.stats(), per_level=per_level, as_csv=as_csv))


@cli.command()
@click.argument("series_id")
@click.option("--csv", "as_csv", is_flag=True, help="Emit CSV instead of a table.")
@click.pass_context
def quality(ctx: click.Context, series_id: str, as_csv: bool) -> None:
    """Per-level SSIM/PSNR of one stored series."""
    store = _open_store(ctx)
    click.echo(render_quality(evaluate_series(store, series_id), as_csv=as_csv))


@cli.command()
@click.option("--listen", envvar="MIST_LISTEN", default="127.0.0.1:8000",
              show_default=True, metavar="ADDR:PORT",
              help="Bind address (env: MIST_LISTEN).")
@click.pass_context
def serve(ctx: click.Context, listen: str) -> None:
    """Serve the store over HTTP until interrupted."""
    import uvicorn

    from .service import create_app

    store = _open_store(ctx)
    host, _, port_text = listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise click.BadParameter("expected ADDR:PORT", param_hint="--listen")
    app = create_app(store)
    try:
        uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    except (OSError, SystemExit) as err:
        raise click.ClickException(f"server failed to start: {err}") from None


@cli.command("export-vectors")
@click.argument("destination", type=click.Path(path_type=Path))
def export_vectors_command(destination: Path) -> None:
    """Write codec conformance vectors for independent decoders."""
    cases = export_vectors(destination)
    click.echo(f"wrote {len(cases)} cases under {destination}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as err:
        err.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except NothingIngestable as err:
        click.echo(f"error: {err}", err=True)
        for path, reason, detail in err.exclusions:
            click.echo(f"  excluded {path}: {reason} ({detail})", err=True)
        return 2
    except HierarchyViolation as err:
        click.echo(f"error: {err}", err=True)
        return 3
    except MistError as err:
        click.echo(f"error: {err}", err=True)
        return 1
    except OSError as err:
        click.echo(f"error: {err}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
