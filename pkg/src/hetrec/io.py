"""Readers and writers for interaction logs, schemas, weight files and run outputs."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError, DataError
from .graph import (
    Direction,
    EdgeTypeRegistry,
    InteractionRecord,
    WeightVector,
    register_schema,
)

LOG_COLUMNS = ("user_id", "object_id", "object_tag", "interaction", "timestamp")


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 instant; naive values are taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    spec = "microseconds" if ts.microsecond else "seconds"
    return ts.replace(tzinfo=None).isoformat(timespec=spec) + "Z"


def _parse_bool(text: str) -> bool | None:
    text = text.strip().lower()
    if text == "":
        return None
    if text in ("1", "true", "yes", "y", "t"):
        return True
    if text in ("0", "false", "no", "n", "f"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_interactions(path: str | os.PathLike) -> list[InteractionRecord]:
    """Load the canonical interaction CSV.

    An optional ``symmetric`` column overrides the schema's reverse-edge rule
    per record. Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, expected header {','.join(LOG_COLUMNS)}")
        missing = [c for c in LOG_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: header is missing columns {', '.join(missing)}")
        has_sym = "symmetric" in reader.fieldnames
        records = []
        for row_no, row in enumerate(reader, start=2):
            try:
                if any(row[c] is None or row[c] == "" for c in LOG_COLUMNS):
                    raise ValueError("empty field")
                records.append(
                    InteractionRecord(
                        user_id=row["user_id"],
                        object_id=row["object_id"],
                        object_tag=row["object_tag"],
                        interaction=row["interaction"],
                        timestamp=parse_timestamp(row["timestamp"]),
                        symmetric=_parse_bool(row["symmetric"] or "") if has_sym else None,
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from None
    return records


def write_interactions(records: Iterable[InteractionRecord], path: str | os.PathLike) -> None:
    records = list(records)
    with_sym = any(r.symmetric is not None for r in records)
    header = list(LOG_COLUMNS) + (["symmetric"] if with_sym else [])

    def rows():
        for r in records:
            row = [r.user_id, r.object_id, r.object_tag, r.interaction, format_timestamp(r.timestamp)]
            if with_sym:
                row.append("" if r.symmetric is None else str(r.symmetric).lower())
            yield row

    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows())


def load_json(path: str | os.PathLike, what: str = "JSON file"):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def schema_from_dict(doc: Mapping) -> EdgeTypeRegistry:
    if not isinstance(doc, Mapping) or "interactions" not in doc:
        raise ConfigError("schema must be an object with an 'interactions' list")
    return register_schema(doc["interactions"], doc.get("tags"))


def load_schema(path: str | os.PathLike) -> EdgeTypeRegistry:
    return schema_from_dict(load_json(path, "schema"))


def schema_to_dict(registry: EdgeTypeRegistry) -> dict:
    return {
        "tags": list(registry.tags),
        "interactions": [
            {"name": d.name, "source": d.source_tag, "target": d.target_tag, "symmetric": d.symmetric}
            for d in sorted(registry.definitions.values(), key=lambda d: d.name)
        ],
    }


def weights_from_dict(doc: Mapping, registry: EdgeTypeRegistry | None = None) -> WeightVector:
    """Parse a weight document.

    Keys are ``"<interaction>:<out|in>"``. A bare ``"<interaction>"`` key sets
    both directions at once (the undirected layout). With a registry, every
    registered edge type must be covered and unknown keys are rejected.
    """
    if not isinstance(doc, Mapping):
        raise ConfigError("weight file must be a JSON object")
    expanded: dict[tuple[str, Direction], float] = {}
    for key, value in doc.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"weight {key!r} is not a number")
        if ":" in key:
            name, _, direction = key.rpartition(":")
            try:
                parts = [(name, Direction(direction))]
            except ValueError:
                raise ConfigError(f"bad direction in weight key {key!r}") from None
        else:
            parts = [(key, Direction.OUT), (key, Direction.IN)]
            if registry is not None:
                parts = [p for p in parts if registry.has(*p)]
        for part in parts:
            if part in expanded:
                raise ConfigError(f"weight for {part[0]}:{part[1].value} given twice")
            expanded[part] = value
    if registry is not None:
        unknown = [p for p in expanded if not registry.has(*p)]
        if unknown:
            raise ConfigError(
                "weights for unregistered edge types: "
                + ", ".join(f"{n}:{d.value}" for n, d in sorted(unknown))
            )
        missing = [t.key for t in registry if t.parts[0] not in expanded]
        if missing:
            raise ConfigError(f"weight file lacks entries for {', '.join(missing)}")
    return WeightVector(expanded)


def load_weights(path: str | os.PathLike, registry: EdgeTypeRegistry | None = None) -> WeightVector:
    return weights_from_dict(load_json(path, "weight file"), registry)


def save_weights(weights: WeightVector | Mapping[str, float], path: str | os.PathLike) -> None:
    doc = weights.as_dict() if isinstance(weights, WeightVector) else dict(weights)
    write_json(doc, path)


def write_json(doc, path: str | os.PathLike) -> None:
    with atomic_write(path) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


class atomic_write:
    """Write a text file via a temporary sibling and rename it into place."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, self._tmp = tempfile.mkstemp(dir=self.path.parent, prefix=f".{self.path.name}.")
        self._fh = os.fdopen(fd, "w", encoding="utf-8", newline="")
        return self._fh

    def __exit__(self, exc_type, exc, tb):
        self._fh.close()
        if exc_type is None:
            os.replace(self._tmp, self.path)
        else:
            os.unlink(self._tmp)
        return False


def file_sha256(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
