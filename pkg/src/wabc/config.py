"""Run configuration: loading, command-line overrides, validation, builders."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema

from .discrepancy import DistanceSpec, NoiseModel, ResidualDistance, combine_distances
from .models import acf_summary, get_model
from .priors import Prior
from .reconstruct import ReconstructionConfig


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def schema() -> dict:
    return json.loads(resources.files("wabc").joinpath("config_schema.json").read_text())


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, assignments) -> dict:
    """Apply ``a.b.c=value`` assignments; values are parsed as JSON when possible."""
    cfg = json.loads(json.dumps(cfg))
    for item in assignments or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {part!r} is not a section")
        node[parts[-1]] = _parse_value(value)
    return cfg


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    return cfg


def build_model(cfg: dict):
    block = cfg.get("model")
    if not block:
        raise ConfigError("a model block is required")
    try:
        return get_model(block["name"], **block.get("options", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None


def build_prior(cfg: dict, model) -> Prior:
    if "prior" in cfg:
        if len(cfg["prior"]) != model.dim:
            raise ConfigError(f"prior has {len(cfg['prior'])} components, model has {model.dim} parameters")
        return Prior(cfg["prior"], model.param_names)
    return model.default_prior()


def distance_spec(block: dict | None) -> DistanceSpec:
    block = dict(block or {})
    block.pop("combine", None)
    block.pop("residual", None)
    recon = ReconstructionConfig(tuple(block.pop("lags", ())), block.pop("stride", 1))
    metric = block.pop("metric", "euclidean")
    if "aspect" in block:
        block["aspect"] = tuple(block["aspect"])
    try:
        return DistanceSpec(reconstruction=recon, curve=metric == "curve", **block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"distance: {exc}") from None


def build_discrepancy(cfg: dict, observed, model):
    """Return ``(model_to_simulate, distance_callable)`` for the sampler."""
    block = cfg.get("distance", {})
    if block.get("residual"):
        if not hasattr(model, "residuals"):
            raise ConfigError(f"model {model.name!r} has no residual map")
        dist = ResidualDistance(model, observed, block.get("p", 1.0))
        return NoiseModel(model, dist.size), dist
    bound = distance_spec(block).bind(observed)
    combine = block.get("combine")
    if combine:
        lags = combine.get("lags", 50)
        return model, combine_distances(bound, combine["eps_h"], lambda s: acf_summary(s, lags))
    return model, bound
