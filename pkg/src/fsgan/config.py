"""JSON run configuration: parsing, validation, and frozen copies.

A config file is one JSON object with optional top-level blocks ``rig``,
``gan``, and ``experiment`` plus a global ``seed``.  Every command writes the
fully resolved configuration next to its outputs so any artifact can be
reproduced from the frozen file alone.
"""

from __future__ import annotations

import json
from pathlib import Path

from .experiments import ExperimentSpec
from .gan import GanConfig
from .rig import RigSpec, rig_from_dict, rig_to_dict


class ConfigError(ValueError):
    error_class = "CONFIG_INVALID"


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def save_config(path: str | Path, cfg: dict) -> None:
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def gan_config_from_dict(d: dict) -> GanConfig:
    try:
        return GanConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"gan block: {exc}") from None


def rig_spec_from_config(cfg: dict) -> RigSpec:
    if "rig" not in cfg:
        raise ConfigError("config has no rig block")
    try:
        return rig_from_dict(cfg["rig"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"rig block: {exc}") from None


def experiment_spec_from_config(cfg: dict) -> ExperimentSpec:
    if "experiment" not in cfg:
        raise ConfigError("config has no experiment block")
    exp = dict(cfg["experiment"])
    rig = rig_spec_from_config(cfg) if "rig" in cfg else None
    gan = gan_config_from_dict(cfg.get("gan", {}))
    if "private_types" in exp and exp["private_types"] is not None:
        exp["private_types"] = {k: list(v) for k, v in exp["private_types"].items()}
    if "seeds" in exp:
        exp["seeds"] = tuple(int(s) for s in exp["seeds"])
    try:
        return ExperimentSpec(rig=rig, gan=gan, **exp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"experiment block: {exc}") from None


def resolved_config(cfg: dict, **overrides) -> dict:
    """Fully resolved copy of a config: defaults filled in, overrides applied."""
    out = {k: v for k, v in cfg.items() if k not in ("rig", "gan", "experiment")}
    out.update(overrides)
    if "rig" in cfg:
        out["rig"] = rig_to_dict(rig_spec_from_config(cfg))
    if "gan" in cfg or "experiment" in cfg:
        out["gan"] = gan_config_from_dict(cfg.get("gan", {})).to_dict()
    if "experiment" in cfg:
        spec = experiment_spec_from_config(cfg)
        out["experiment"] = {
            "scenario": spec.scenario,
            "name": spec.name,
            "source_domain": spec.source_domain,
            "target_domain": spec.target_domain,
            "data_path": spec.data_path,
            "fault_types": spec.fault_types,
            "private_types": spec.private_types,
            "shared_classes": list(spec.shared_classes),
            "eval_kernel": spec.eval_kernel,
            "eval_epochs": spec.eval_epochs,
            "eval_batch": spec.eval_batch,
            "test_fraction": spec.test_fraction,
            "scaling_mode": spec.scaling_mode,
            "seeds": list(spec.seeds),
        }
    return out


def freeze_config(cfg: dict, out_dir: str | Path, **overrides) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frozen = out_dir / "config.frozen.json"
    save_config(frozen, resolved_config(cfg, **overrides))
    return frozen
