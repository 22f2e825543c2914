"""Operator surface: IDX ingestion, JSON configuration, plots and the ``tsynd`` CLI."""

from .cli import main, run_cli
from .config import ConfigFile, load_config, parse_config
from .idx import IMAGE_MAGIC, LABEL_MAGIC, IdxFile, load_idx, parse_idx, read_idx, save_idx, write_idx
from .plot import plot

__all__ = [
    "main",
    "run_cli",
    "ConfigFile",
    "load_config",
    "parse_config",
    "IMAGE_MAGIC",
    "LABEL_MAGIC",
    "IdxFile",
    "load_idx",
    "parse_idx",
    "read_idx",
    "save_idx",
    "write_idx",
    "plot",
]
