"""Command-line driver: ``kahlerlab run``, ``kahlerlab suite`` and ``kahlerlab report``."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import ConfigError, list_presets, load_config, load_preset, preset_dir
from .runner import REPORT_COLUMNS, RunResult, collect_configs, execute, report_table
from .serialize import dumps, format_float, write_csv

EXIT_FAIL = 1
EXIT_ERROR = 2


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _summary(result: RunResult) -> None:
    head = result.outcome.headline
    status = "PASS" if result.passed else "FAIL"
    click.echo(f"{result.config.name:<32} {result.config.kind:<18} {head.get('metric', ''):<22} "
               f"{_fmt(head.get('value', '')):<14} {status}")


def _resolve(target: str):
    path = Path(target)
    if path.exists():
        return load_config(path)
    if target in list_presets():
        return load_preset(target)
    raise ConfigError(f"no configuration file or preset named {target!r}")


def _run_one(cfg, output_root):
    try:
        return execute(cfg, output_root)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
    except Exception as exc:  # module errors are reported verbatim
        click.echo(f"{cfg.name}: {type(exc).__name__}: {exc}", err=True)
    return None


@click.group()
@click.version_option(package_name="kahlerlab")
def main():
    """Numerical experiments for complex Monge-Ampère equations near a divisor."""


@main.command()
@click.argument("config")
@click.option("--output-root", type=click.Path(file_okay=False), default=None,
              help="Directory for run artifacts (overrides KAHLERLAB_OUTPUT_ROOT and the config).")
def run(config: str, output_root):
    """Run one experiment from a JSON CONFIG file or a preset name."""
    try:
        cfg = _resolve(config)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    result = _run_one(cfg, output_root)
    if result is None:
        sys.exit(EXIT_ERROR)
    _summary(result)
    click.echo(f"artifacts: {result.directory}")
    sys.exit(0 if result.passed else EXIT_FAIL)


@main.command()
@click.argument("directory", required=False)
@click.option("--output-root", type=click.Path(file_okay=False), default=None)
@click.option("--only", multiple=True, help="Run only the named configs (file stems).")
def suite(directory, output_root, only):
    """Run every config in DIRECTORY (default: the shipped presets) in name order."""
    folder = Path(directory) if directory else preset_dir()
    paths = collect_configs(folder)
    if only:
        paths = [p for p in paths if p.stem in only]
    if not paths:
        click.echo(f"no configurations found in {folder}", err=True)
        sys.exit(EXIT_ERROR)
    failures = errors = 0
    for path in paths:
        try:
            cfg = load_config(path)
        except ConfigError as exc:
            click.echo(f"{path.name}: configuration error: {exc}", err=True)
            errors += 1
            continue
        result = _run_one(cfg, output_root)
        if result is None:
            errors += 1
            continue
        _summary(result)
        failures += not result.passed
    click.echo(f"{len(paths) - failures - errors}/{len(paths)} passed")
    if errors:
        sys.exit(EXIT_ERROR)
    sys.exit(EXIT_FAIL if failures else 0)


@main.command()
@click.argument("directories", nargs=-1, required=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None, help="Write the table as CSV.")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None, help="Write the table as JSON.")
def report(directories, csv_path, json_path):
    """Consolidate run DIRECTORIES into one table (a suite root expands to its runs)."""
    dirs = []
    for d in directories:
        p = Path(d)
        if (p / "manifest.json").exists() or not p.is_dir():
            dirs.append(p)
        else:
            dirs.extend(sorted(q for q in p.iterdir() if q.is_dir() and not q.name.startswith(".")))
    rows = report_table(dirs)
    if csv_path:
        write_csv(csv_path, REPORT_COLUMNS, [[r[c] for c in REPORT_COLUMNS] for r in rows])
    if json_path:
        Path(json_path).write_text(dumps(rows))
    click.echo("\t".join(REPORT_COLUMNS))
    for r in rows:
        click.echo("\t".join(format_float(v) if isinstance(v, float) else str(v) for v in (r[c] for c in REPORT_COLUMNS)))
    passed = sum(r["status"] == "pass" for r in rows)
    click.echo(f"{passed}/{len(rows)} passed")


if __name__ == "__main__":
    main()
