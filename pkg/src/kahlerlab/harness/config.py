"""Experiment configuration: schema validation, defaults and named presets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

__all__ = [
    "KINDS",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "list_presets",
    "load_preset",
    "preset_dir",
]

KINDS = (
    "solve-calabi",
    "solve-perturbed",
    "model-metric",
    "barrier",
    "decay",
    "curvature-profile",
    "growth-profile",
)

CHART_KINDS = {
    "solve-calabi": ("torus",),
    "solve-perturbed": ("torus",),
    "model-metric": ("annulus", "product"),
    "barrier": ("product", "annulus"),
    "decay": ("annulus", "product"),
    "curvature-profile": ("product", "annulus"),
    "growth-profile": ("annulus", "product"),
}

# payload keys each kind requires; everything else is optional
REQUIRED_PAYLOAD = {
    "solve-calabi": ("source",),
    "solve-perturbed": ("source", "epsilons"),
    "model-metric": (),
    "barrier": ("i", "j", "k"),
    "decay": ("m", "field"),
    "curvature-profile": (),
    "growth-profile": (),
}

OPTIONAL_PAYLOAD = {
    "solve-calabi": ("max_residual", "max_conservation", "oracle", "solver"),
    "solve-perturbed": ("solver",),
    "model-metric": ("model", "tolerance", "curvature_tolerance", "identity_tolerance"),
    "barrier": ("model", "C", "theta", "variant", "expect", "drop_constant", "fraction"),
    "decay": ("model", "expect"),
    "curvature-profile": ("model", "expect_a", "expect_b", "tolerance_a", "tolerance_b", "fraction"),
    "growth-profile": (
        "model", "metric", "fraction", "expect_exponent", "tolerance",
        "expect_bounded", "max_alpha", "expect_alpha", "alpha_tolerance",
    ),
}

GEOMETRY_KEYS = {
    "torus": (),
    "annulus": ("r_min", "r_max"),
    "product": ("r_min", "r_max"),
    "patch": (),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description.

    ``payload`` holds the kind-specific problem, model or barrier parameters.
    ``seed`` drives every synthetic input so runs are reproducible.
    """

    kind: str
    name: str
    chart: dict
    payload: dict = field(default_factory=dict)
    output_dir: str = "runs"
    seed: int = 0

    def __post_init__(self):
        validate(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        if "config" in data and "kind" not in data:
            data = data["config"]  # a run manifest
        validate(data)
        return cls(
            kind=data["kind"],
            name=data.get("name", data["kind"]),
            chart=dict(data["chart"]),
            payload=dict(data.get("payload", {})),
            output_dir=data.get("output_dir", "runs"),
            seed=int(data.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "chart": self.chart,
            "payload": self.payload,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


def validate(data: dict) -> None:
    """Raise :class:`ConfigError` naming the first schema violation."""
    for key in ("kind", "chart"):
        if key not in data:
            raise ConfigError(f"missing required field {key!r}")
    kind = data["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
    chart = data["chart"]
    if not isinstance(chart, dict):
        raise ConfigError("'chart' must be an object")
    for key in ("kind", "n", "resolution"):
        if key not in chart:
            raise ConfigError(f"missing required field 'chart.{key}'")
    if chart["kind"] not in CHART_KINDS[kind]:
        raise ConfigError(f"{kind} runs need a chart of kind {' or '.join(CHART_KINDS[kind])}")
    if not isinstance(chart["n"], int) or chart["n"] < 1:
        raise ConfigError("'chart.n' must be a positive integer")
    res = chart["resolution"]
    if not (isinstance(res, int) or (isinstance(res, list) and all(isinstance(v, int) for v in res))):
        raise ConfigError("'chart.resolution' must be an integer or a list of integers")
    geo = chart.get("geometry", {})
    for key in GEOMETRY_KEYS[chart["kind"]]:
        if key not in geo:
            raise ConfigError(f"missing required field 'chart.geometry.{key}'")
    payload = data.get("payload", {})
    if not isinstance(payload, dict):
        raise ConfigError("'payload' must be an object")
    for key in REQUIRED_PAYLOAD[kind]:
        if key not in payload:
            raise ConfigError(f"missing required field 'payload.{key}' for {kind}")
    unknown = sorted(set(payload) - set(REQUIRED_PAYLOAD[kind]) - set(OPTIONAL_PAYLOAD[kind]))
    if unknown:
        raise ConfigError(f"unknown payload fields for {kind}: {', '.join(unknown)}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("'seed' must be an integer")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(data)


def preset_dir() -> Path:
    return Path(str(resources.files("kahlerlab.harness") / "presets"))


def list_presets() -> list[str]:
    return sorted(p.stem for p in preset_dir().glob("*.json"))


def load_preset(name: str) -> ExperimentConfig:
    path = preset_dir() / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return load_config(path)
