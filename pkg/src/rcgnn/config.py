"""Run configuration: key=value config files, flag overrides, provenance headers."""

from __future__ import annotations

import configparser
import hashlib

from . import __version__


def load_config(path) -> dict[str, dict[str, str]]:
    """Parse an INI-style config file into {section: {key: value}}."""
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    return {section: dict(parser.items(section)) for section in parser.sections()}


def _cast(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def resolve(defaults: dict, section: dict[str, str], overrides: dict) -> dict:
    """Merge defaults <- config section <- command-line overrides."""
    out = dict(defaults)
    for key, raw in section.items():
        norm = key.replace("-", "_")
        if norm in out:
            out[norm] = _cast(raw, out[norm]) if out[norm] is not None else raw
    for key, val in overrides.items():
        if val is not None and key in out:
            out[key] = val
    return out


# file-location options stay out of the provenance line: identical runs into
# different directories must still produce byte-identical records
PATH_KEYS = frozenset(
    {"out", "data", "checkpoint", "checkpoint_out", "log_out", "embeddings_out", "config"}
)


def config_hash(effective: dict) -> str:
    keys = sorted(k for k in effective if k not in PATH_KEYS)
    canon = "\n".join(f"{k}={effective[k]}" for k in keys)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def provenance(cmd: str, seed: int, effective: dict) -> str:
    """First-line comment for every output artifact: version, seed, config."""
    keys = sorted(k for k in effective if k not in PATH_KEYS)
    flat = " ".join(f"{k}={effective[k]}" for k in keys)
    return f"rcgnn v{__version__} cmd={cmd} seed={seed} config={config_hash(effective)} :: {flat}"
