"""Loading of JSON / TOML configuration files."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import DataFormatError

CONFIG_ENV = "BELLSTRINGS_CONFIG"


def load_mapping(path: str | Path) -> dict[str, Any]:
    """Parse a config file; ``.json`` is read as JSON, anything else as TOML."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise DataFormatError(f"{path}: top level must be a table/object")
    return data


def default_config_path() -> Path | None:
    value = os.environ.get(CONFIG_ENV)
    return Path(value) if value else None
