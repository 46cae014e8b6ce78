"""CSV/JSON output with a digest manifest that can be re-verified later."""

from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


def format_scalar(x) -> str:
    """17 significant digits for floats so values round-trip exactly."""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float) or hasattr(x, "dtype"):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_scalar(x) for x in row])
    return path


def read_csv(path) -> tuple[list, list]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def emit_outputs(results: dict, out_dir, command: str, config: dict, seed: int, started: str | None = None) -> dict:
    """Write ``results`` into ``out_dir`` and add a manifest.

    ``results`` maps file names to either ``(header, rows)`` for CSV or any
    JSON-serializable object for ``.json`` names.  Every emitted file gets a
    sha256 digest in the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, payload in sorted(results.items()):
        if name == MANIFEST_NAME:
            raise ValueError(f"{MANIFEST_NAME} is reserved")
        path = out / name
        if name.endswith(".csv"):
            write_csv(path, *payload)
        elif name.endswith(".json"):
            write_json(path, payload)
        else:
            raise ValueError(f"unsupported output type for {name}")
        files[name] = sha256(path)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "started": started or now_iso(),
        "finished": now_iso(),
        "files": files,
    }
    write_json(out / MANIFEST_NAME, manifest)
    return manifest


def verify_manifest(path) -> list[str]:
    """Problems found when re-hashing the files listed in a manifest; empty means intact."""
    path = Path(path)
    manifest = json.loads(path.read_text(encoding="utf-8"))
    problems = []
    for name, digest in manifest.get("files", {}).items():
        f = path.parent / name
        if not f.is_file():
            problems.append(f"{name}: missing")
        elif sha256(f) != digest:
            problems.append(f"{name}: digest mismatch")
    return problems
