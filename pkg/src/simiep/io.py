"""CSV / JSON output with provenance headers and a per-command manifest."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Dict, Iterable, Sequence

import numpy as np

from . import __version__
from .config import ScenarioConfig

# columns that carry wall-clock time and are left out of content digests
TIMING_COLUMNS = ("wall_ms", "seconds")


def provenance(config: ScenarioConfig) -> dict:
    return {"master_seed": config.master_seed, "config_hash": config.config_hash(),
            "version": __version__}


def _fmt(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path, config: ScenarioConfig, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    """Write rows under a ``# master_seed=... config_hash=... version=...`` line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = provenance(config)
    with path.open("w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in columns})
    return path


def read_csv(path):
    """Return ``(meta, rows)``; values stay strings."""
    lines = Path(path).read_text().splitlines()
    meta = {}
    if lines and lines[0].startswith("#"):
        for item in lines[0][1:].split():
            key, _, val = item.partition("=")
            meta[key] = val
        lines = lines[1:]
    return meta, list(csv.DictReader(lines))


def content_digest(rows: Iterable[dict], exclude: Sequence[str] = TIMING_COLUMNS) -> str:
    """sha256 of the rows with timing columns dropped, in row order."""
    h = hashlib.sha256()
    for row in rows:
        clean = {k: _fmt(v) for k, v in row.items() if k not in exclude}
        h.update(json.dumps(clean, sort_keys=True, default=str).encode())
    return h.hexdigest()


def file_digest(path, exclude: Sequence[str] = TIMING_COLUMNS) -> str:
    _, rows = read_csv(path)
    return content_digest(rows, exclude)


def write_json(path, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_manifest(out_dir, command: str, config: ScenarioConfig, outputs: Dict[str, Path],
                   extra: dict | None = None) -> Path:
    """Manifest with the config echo and a timing-free digest of every CSV output."""
    out_dir = Path(out_dir)
    digests: Dict[str, str] = {}
    for name, path in sorted(outputs.items()):
        path = Path(path)
        if path.suffix == ".csv":
            digests[name] = file_digest(path)
        else:
            digests[name] = hashlib.sha256(path.read_bytes()).hexdigest()
    combined = hashlib.sha256("".join(digests[k] for k in sorted(digests)).encode()).hexdigest()
    manifest = {
        "command": command,
        **provenance(config),
        "config": config.model_dump(mode="json"),
        "outputs": {k: str(Path(v).name) for k, v in outputs.items()},
        "output_digests": digests,
        "content_hash": combined,
        "sum_rate_definition": "artifact-defined: sum_k log2(1 + SINR_k) of a least-squares "
                               "linear model, residual counted as distortion",
    }
    if extra:
        manifest.update(extra)
    return write_json(out_dir / f"{command}_manifest.json", manifest)

