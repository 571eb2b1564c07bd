"""Plain-text key=value configuration files and JSON-lines result records.

Configs are one `key = value` per line with `#` comments; unknown keys are
rejected so typos fail loudly.  Results are one JSON object per line with
sorted keys, a format that diffs and plots cleanly; the only wall-clock
value lives in the leading header record.
"""

from __future__ import annotations

import json
import time
from typing import Callable, Iterable, Mapping, TextIO


class ConfigError(ValueError):
    """Malformed configuration input."""


def as_int(text: str) -> int:
    return int(text, 0)


def as_float(text: str) -> float:
    return float(text)


def as_str(text: str) -> str:
    return text


def as_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def as_hex(length: int | None = None) -> Callable[[str], bytes]:
    def convert(text: str) -> bytes:
        try:
            raw = bytes.fromhex(text)
        except ValueError as exc:
            raise ConfigError(f"invalid hex string: {exc}") from exc
        if length is not None and len(raw) != length:
            raise ConfigError(f"expected {length} hex-encoded bytes, got {len(raw)}")
        return raw
    return convert


def as_float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def as_int_list(text: str) -> list[int]:
    return [int(part, 0) for part in text.split(",") if part.strip()]


def as_str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def parse_config_text(text: str, schema: Mapping[str, Callable[[str], object]]) -> dict:
    """Parse `key = value` lines through the per-key converters in `schema`."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            out[key] = schema[key](value)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return out


def load_config(path: str, schema: Mapping[str, Callable[[str], object]]) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fp:
            text = fp.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config_text(text, schema)


def header_record(command: str, seed: int, config: Mapping[str, object]) -> dict:
    """Leading record carrying the fully resolved run configuration.

    The timestamp is isolated here so every later record is reproducible.
    """
    printable = {
        k: (v.hex() if isinstance(v, (bytes, bytearray)) else v)
        for k, v in sorted(config.items())
    }
    return {
        "record": "header",
        "command": command,
        "seed": seed,
        "config": printable,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def write_records(fp: TextIO, records: Iterable[Mapping[str, object]]) -> int:
    count = 0
    for record in records:
        fp.write(json.dumps(record, sort_keys=True))
        fp.write("\n")
        count += 1
    return count
