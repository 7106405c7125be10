"""Run directories: artifacts, manifests and consolidated report tables.

A run directory holds ``manifest.json``, ``report.json``, one CSV per curve,
one ``.field`` file per serialized field and ``timing.json``.  Wall-clock
timings live only in ``timing.json`` so that every other file is a pure
function of the configuration.  Artifacts are assembled in a staging
directory and moved into place only when the run completes.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from .. import __version__
from ..core.fields import write_field
from .config import ExperimentConfig, load_config
from .experiments import Outcome, run_experiment
from .serialize import write_csv, write_json

__all__ = [
    "OUTPUT_ROOT_ENV",
    "RunResult",
    "output_root",
    "execute",
    "write_artifacts",
    "collect_configs",
    "report_table",
    "REPORT_COLUMNS",
]

OUTPUT_ROOT_ENV = "KAHLERLAB_OUTPUT_ROOT"


@dataclass
class RunResult:
    config: ExperimentConfig
    outcome: Outcome
    directory: Path

    @property
    def passed(self) -> bool:
        return self.outcome.passed


def output_root(cfg: ExperimentConfig, override=None) -> Path:
    """Explicit override, then the environment variable, then the config's directory."""
    if override is not None:
        return Path(override)
    env = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(env) if env else Path(cfg.output_dir)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_artifacts(directory: Path, outcome: Outcome, resolved: dict) -> list[str]:
    """Write every artifact of a finished run into ``directory`` (which must exist)."""
    write_json(directory / "report.json", {"passed": outcome.passed, "headline": outcome.headline, "report": outcome.report})
    for name, (header, rows) in sorted(outcome.curves.items()):
        write_csv(directory / f"{name}.csv", header, rows)
    for name, fld in sorted(outcome.fields.items()):
        write_field(directory / f"{name}.field", fld)
    names = sorted(p.name for p in directory.iterdir())
    manifest = {
        "package": {"name": "kahlerlab", "version": __version__},
        "config": resolved,
        "status": "pass" if outcome.passed else "fail",
        "headline": outcome.headline,
        "artifacts": {name: _sha256(directory / name) for name in names},
    }
    write_json(directory / "manifest.json", manifest)
    write_json(directory / "timing.json", {k: outcome.timings[k] for k in sorted(outcome.timings)})
    return names


def execute(cfg: ExperimentConfig, root=None) -> RunResult:
    """Run ``cfg`` and publish its artifacts under ``root / cfg.name``.

    Any exception propagates and leaves no partial run directory behind.
    """
    root = output_root(cfg, root)
    start = time.perf_counter()
    outcome, resolved = run_experiment(cfg)
    outcome.timings["total"] = time.perf_counter() - start
    root.mkdir(parents=True, exist_ok=True)
    target = root / cfg.name
    staging = Path(tempfile.mkdtemp(prefix=f".{cfg.name}.", dir=root))
    try:
        write_artifacts(staging, outcome, resolved)
        if target.exists():
            shutil.rmtree(target)
        staging.rename(target)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return RunResult(cfg, outcome, target)


def collect_configs(directory) -> list[Path]:
    """Configuration files of a suite directory in deterministic order."""
    return sorted(Path(directory).glob("*.json"))


REPORT_COLUMNS = ["run", "experiment", "n", "resolution", "metric", "value", "claimed", "delta", "status"]


def report_table(directories) -> list[dict]:
    """One row per run directory, sorted by path; a missing manifest gives a flagged row."""
    rows = []
    for d in sorted(Path(p) for p in directories):
        path = d / "manifest.json"
        if not path.exists():
            rows.append({col: "" for col in REPORT_COLUMNS} | {"run": str(d), "status": "missing-manifest"})
            continue
        man = json.loads(path.read_text())
        cfg = man["config"]
        head = man.get("headline", {})
        claimed = head.get("claimed")
        value = head.get("value")
        delta = abs(value - claimed) if isinstance(claimed, (int, float)) and isinstance(value, (int, float)) else ""
        rows.append(
            {
                "run": str(d),
                "experiment": cfg["kind"],
                "n": cfg["chart"]["n"],
                "resolution": "x".join(str(v) for v in cfg["chart"]["resolution"]),
                "metric": head.get("metric", ""),
                "value": value if value is not None else "",
                "claimed": claimed if claimed is not None else "",
                "delta": delta,
                "status": man.get("status", "unknown"),
            }
        )
    return rows


def load_and_execute(path, root=None) -> RunResult:
    return execute(load_config(path), root)
