"""Versioned artifact files with config-hash provenance and atomic writes."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

from .errors import SchemaError

SCHEMA_VERSION = 1


def schema_tag(kind: str) -> str:
    return f"ricciflowrec.{kind}/{SCHEMA_VERSION}"


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, kind: str, payload: dict, config_hash: str | None) -> Path:
    doc = {"schema": schema_tag(kind), "config_hash": config_hash, **payload}
    return atomic_write_text(path, canonical_json(doc))


def read_json(path, kind: str) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SchemaError(f"missing artifact: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    found = doc.get("schema") if isinstance(doc, dict) else None
    if found != schema_tag(kind):
        raise SchemaError(f"{path}: expected schema {schema_tag(kind)}, found {found}")
    return doc


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, kind: str, header: Sequence[str], rows: Iterable[Sequence], config_hash: str | None) -> Path:
    buf = io.StringIO()
    buf.write(f"#schema={schema_tag(kind)} config_hash={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path, kind: str, header: Sequence[str]) -> tuple[str | None, list[list[str]]]:
    """Return (config_hash, rows) after checking the schema line and header."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise SchemaError(f"missing artifact: {path}") from None
    if not lines or not lines[0].startswith("#"):
        raise SchemaError(f"{path}: missing schema line; expected {schema_tag(kind)}")
    meta = dict(part.split("=", 1) for part in lines[0][1:].split() if "=" in part)
    if meta.get("schema") != schema_tag(kind):
        raise SchemaError(f"{path}: expected schema {schema_tag(kind)}, found {meta.get('schema')}")
    reader = csv.reader(lines[1:])
    found = next(reader, None)
    if found != list(header):
        raise SchemaError(f"{path}: expected columns {','.join(header)}, found {found}")
    h = meta.get("config_hash")
    return (None if h in (None, "None") else h), [r for r in reader if r]


def check_same_hash(*hashes: str | None) -> str | None:
    """All provided hashes must agree; ``None`` entries are ignored."""
    found = {h for h in hashes if h is not None}
    if len(found) > 1:
        raise SchemaError(f"inputs come from different configurations: {sorted(found)}")
    return next(iter(found), None)
