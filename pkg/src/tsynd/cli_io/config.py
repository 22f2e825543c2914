"""JSON run configuration: RunConfig fields, generation settings and file paths."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional, Union

from ..errors import ConfigError
from ..harness.training import RunConfig
from ..synthesis import GenConfig

PATH_KEYS = (
    "train_images",
    "train_labels",
    "val_images",
    "val_labels",
    "test_images",
    "test_labels",
    "ae_checkpoint",
    "out_dir",
)
RUN_KEYS = tuple(f.name for f in dataclasses.fields(RunConfig) if f.name != "gen")
GEN_KEYS = tuple(f.name for f in dataclasses.fields(GenConfig))
EXTRA_KEYS = ("ae_epochs", "ae_lr", "num_classes", "shapes_n", "synth_n", "adversarial_steps", "adversarial_lr")

DEFAULTS = {
    "ae_epochs": 6,
    "ae_lr": 1e-3,
    "num_classes": None,
    "shapes_n": 400,
    "synth_n": 16,
    "adversarial_steps": 50,
    "adversarial_lr": 0.1,
}


@dataclass
class ConfigFile:
    run: RunConfig = field(default_factory=RunConfig)
    paths: dict = field(default_factory=dict)
    extra: dict = field(default_factory=lambda: dict(DEFAULTS))
    base_dir: str = "."

    def path(self, key: str) -> Optional[str]:
        value = self.paths.get(key)
        if value is None:
            return None
        return value if os.path.isabs(value) else os.path.join(self.base_dir, value)


def parse_config(doc: dict, base_dir: str = ".") -> ConfigFile:
    """Build a :class:`ConfigFile`; unknown keys anywhere are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    allowed = set(RUN_KEYS) | set(PATH_KEYS) | set(EXTRA_KEYS) | {"gen"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    gen_doc = doc.get("gen", {})
    if not isinstance(gen_doc, dict):
        raise ConfigError("'gen' must be an object")
    unknown = sorted(set(gen_doc) - set(GEN_KEYS))
    if unknown:
        raise ConfigError(f"unknown gen keys: {', '.join(unknown)}")
    try:
        gen = GenConfig(**gen_doc)
        run_args = {k: doc[k] for k in RUN_KEYS if k in doc}
        if "perturbations" in run_args:
            run_args["perturbations"] = tuple(run_args["perturbations"])
        run = RunConfig(gen=gen, **run_args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    paths = {k: doc[k] for k in PATH_KEYS if k in doc}
    extra = dict(DEFAULTS)
    extra.update({k: doc[k] for k in EXTRA_KEYS if k in doc})
    return ConfigFile(run, paths, extra, base_dir)


def load_config(path: Union[str, os.PathLike]) -> ConfigFile:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc, os.path.dirname(os.path.abspath(path)))


def describe_defaults() -> str:
    """Default values of every config key, for ``--help``."""
    run = RunConfig()
    parts = [f"{k}={getattr(run, k)!r}" for k in RUN_KEYS]
    parts += [f"gen.{k}={v!r}" for k, v in GenConfig().to_dict().items()]
    parts += [f"{k}={v!r}" for k, v in DEFAULTS.items()]
    parts += [f"{k}=(path)" for k in PATH_KEYS]
    return "; ".join(parts)
