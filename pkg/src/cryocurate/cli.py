"""Single executable exposing fetch/clean/search/download/dataset/info."""

from __future__ import annotations

import sys

import click

from . import archive, dataset as ds, imgformats
from .config import CliConfig
from .errors import (
    BadPattern,
    CryocurateError,
    DirectoryNotFound,
    EmptyDataset,
    EntryNotFound,
    NoMatches,
    NotFetched,
    NotFoundInAnyDatabase,
    TransportError,
    UnknownClass,
    UnrecognizedIdFormat,
)
from .fetcher import Fetcher

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NOT_FOUND = 2
EXIT_EMPTY = 3
EXIT_USAGE = 64
EXIT_NO_INPUT = 66


@click.group(invoke_without_command=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="TOML config file.")
@click.option("--show-config", is_flag=True, help="Print the effective configuration.")
@click.option("--archive-url", default=None)
@click.option("--pdb-url", default=None)
@click.option("--alphafold-url", default=None)
@click.option("--uniprot-url", default=None)
@click.option("--cache-dir", default=None)
@click.option("--timeout", type=float, default=None)
@click.option("-v", "--verbose", "verbosity", count=True)
@click.pass_context
def cli(ctx, config_file, show_config, archive_url, pdb_url, alphafold_url,
        uniprot_url, cache_dir, timeout, verbosity):
    ctx.obj = CliConfig.load(
        config_file,
        archive_url=archive_url,
        pdb_url=pdb_url,
        alphafold_url=alphafold_url,
        uniprot_url=uniprot_url,
        cache_dir=cache_dir,
        timeout=timeout,
        verbosity=verbosity or None,
    )
    if show_config:
        click.echo(ctx.obj.show())
        ctx.exit(EXIT_OK)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        ctx.exit(EXIT_USAGE)


def _make_fetcher(config: CliConfig, main_db: str, save_directory: str | None) -> Fetcher:
    return Fetcher(
        default_db=main_db,
        save_directory=save_directory or config.cache_dir,
        pdb_url=config.pdb_url,
        alphafold_url=config.alphafold_url,
        uniprot_url=config.uniprot_url,
        timeout=config.timeout,
    )


@cli.command()
@click.argument("identifier")
@click.option("--filetype", type=click.Choice(["cif", "pdb", "any"]), default="any")
@click.option("--main_db", type=click.Choice(["pdb", "alphafold"]), default="pdb")
@click.option("--save_directory", default=None)
@click.pass_obj
def fetch(config, identifier, filetype, main_db, save_directory):
    """Download a structure by PDB ID or UniProt accession."""
    fetcher = _make_fetcher(config, main_db, save_directory)
    result = fetcher.get_file(identifier, filetype=filetype, filesave=True)
    click.echo(str(fetcher.save_directory / result.filename))
    return EXIT_OK


@cli.command()
@click.argument("identifier")
@click.option("--signal-peptides", is_flag=True)
@click.option("--hydrogens", is_flag=True)
@click.option("--water", is_flag=True)
@click.option("--hetatoms", is_flag=True)
@click.option("--output", default=None)
@click.option("--main_db", type=click.Choice(["pdb", "alphafold"]), default="pdb")
@click.option("--save_directory", default=None)
@click.pass_obj
def clean(config, identifier, signal_peptides, hydrogens, water, hetatoms,
          output, main_db, save_directory):
    """Remove selected content from a previously fetched structure."""
    if not any((signal_peptides, hydrogens, water, hetatoms)):
        click.echo("warning: no removal options given; output is a plain copy",
                   err=True)
    fetcher = _make_fetcher(config, main_db, save_directory)
    out_path = fetcher.remove(identifier, signal_peptides=signal_peptides,
                              hydrogens=hydrogens, water=water, hetatoms=hetatoms,
                              output_filename=output)
    click.echo(str(out_path))
    return EXIT_OK


@cli.command()
@click.option("--entry", required=True, type=int)
@click.option("--dir", "directory", default=None)
@click.option("--select", default="*")
@click.option("--regex", is_flag=True)
@click.option("--verbose", is_flag=True)
@click.option("--save_search", "save_search_path", default=None)
@click.pass_obj
def search(config, entry, directory, select, regex, verbose, save_search_path):
    """Search one archive directory with a glob or regex pattern."""
    result = archive.search(entry, directory=directory, select=select,
                            is_regex=regex, base_url=config.archive_url)
    if verbose:
        sections = [f"Matching path #{k}:\n{url}"
                    for k, url in enumerate(result.matched_paths)]
        sections += [f"Subdirectories are:\n{url}" for url in result.subdirectories]
        if sections:
            click.echo("\n\n".join(sections))
    if save_search_path is not None:
        archive.save_search(result, save_search_path)
    return EXIT_OK if result.matched_paths else EXIT_EMPTY


@cli.command()
@click.option("--download", "url_list", required=True, type=click.Path())
@click.option("--save_dir", required=True, type=click.Path())
@click.option("--verbose", is_flag=True)
@click.pass_obj
def download(config, url_list, save_dir, verbose):
    """Download every URL in a saved search list."""
    report = archive.download(url_list, save_dir)
    for item in report.files:
        if verbose or not item.ok:
            status = f"ok ({item.size} bytes)" if item.ok else f"FAILED: {item.error}"
            click.echo(f"{item.url}: {status}")
    if report.failed:
        click.echo(f"{len(report.failed)} of {len(report.files)} downloads failed",
                   err=True)
        return EXIT_FAILURE
    return EXIT_OK


@cli.command()
@click.argument("action", type=click.Choice(["build", "export"]))
@click.option("--datapath", required=True, type=click.Path(exists=True))
@click.option("--datatype", default="mrc")
@click.option("--classes", default=None, help="Comma-separated class labels.")
@click.option("--dataset-size", type=int, default=None)
@click.option("--transforms", "transforms_text", default="")
@click.option("--split", "split_fraction", type=float, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--batch-size", type=int, default=32)
@click.option("--out", type=click.Path(), default=None)
def dataset(action, datapath, datatype, classes, dataset_size, transforms_text,
            split_fraction, seed, batch_size, out):
    """Assemble a labeled dataset; build a summary or export batches."""
    try:
        transforms = ds.TransformSpec.parse(transforms_text)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    class_list = [c for c in (classes or "").split(",") if c] or None
    manifest = ds.discover(datapath, datatype=datatype, classes=class_list,
                           dataset_size=dataset_size, transforms=transforms)
    click.echo(f"classes: {', '.join(manifest.classes)}")
    for label in manifest.classes:
        count = sum(1 for r in manifest.records if r.class_label == label)
        click.echo(f"  {label}: {count}")
    click.echo(f"total: {len(manifest)} items")
    if action == "build":
        return EXIT_OK
    if out is None:
        raise click.UsageError("dataset export requires --out")
    if split_fraction is not None:
        train, val = ds.split(manifest, ds.SplitConfig(split_fraction, seed=seed))
        ds.export(train, f"{out}/train", batch_size)
        ds.export(val, f"{out}/val", batch_size)
        click.echo(f"exported {len(train)} train / {len(val)} val items to {out}")
    else:
        ds.export(manifest, out, batch_size)
        click.echo(f"exported {len(manifest)} items to {out}")
    return EXIT_OK


@cli.command()
@click.argument("path", type=click.Path(exists=True))
def info(path):
    """Summarize a local MRC, NPY or STAR file."""
    with open(path, "rb") as fh:
        payload = fh.read()
    fmt = imgformats.detect_format(payload, filename_hint=path)
    if fmt == imgformats.FileFormat.MRC:
        header, image = imgformats.read_mrc(payload)
        click.echo(f"format: MRC")
        click.echo(f"nx: {header.nx}")
        click.echo(f"ny: {header.ny}")
        click.echo(f"nz: {header.nz}")
        click.echo(f"mode: {header.mode}")
        click.echo(f"dmin: {header.dmin:g}")
        click.echo(f"dmax: {header.dmax:g}")
        click.echo(f"dmean: {header.dmean:g}")
        if image.voxel_size:
            click.echo("voxel_size: " + " ".join(f"{v:g}" for v in image.voxel_size))
    elif fmt == imgformats.FileFormat.NPY:
        image = imgformats.read_npy(payload)
        click.echo("format: NPY")
        click.echo(f"shape: {'x'.join(str(s) for s in image.shape)}")
        click.echo(f"dtype: {image.dtype}")
    elif fmt == imgformats.FileFormat.STAR:
        table = imgformats.read_star(payload.decode("utf-8"))
        click.echo("format: STAR")
        for block in table.blocks.values():
            click.echo(f"block {block.name}: {len(block.pairs)} pairs, "
                       f"{len(block.loops)} loops")
            for loop in block.loops:
                click.echo(f"  loop: {len(loop.columns)} columns x {len(loop.rows)} rows")
    else:
        click.echo("OPAQUE")
    return EXIT_OK


def main(argv=None) -> int:
    """Run the CLI; returns the process exit code."""
    try:
        result = cli.main(args=argv, standalone_mode=False)
        return result if isinstance(result, int) else EXIT_OK
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return 130
    except (NotFoundInAnyDatabase, EntryNotFound, NotFetched, DirectoryNotFound,
            UnknownClass) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_NOT_FOUND
    except (EmptyDataset, NoMatches) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_EMPTY
    except (BadPattern, UnrecognizedIdFormat) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_NO_INPUT
    except TransportError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_FAILURE
    except (CryocurateError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_FAILURE


def entry() -> None:
    sys.exit(main())
