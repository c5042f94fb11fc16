"""Run manifests and CSV emission.

Every run writes one JSON manifest (the full resolved configuration, seeds,
wall time, per-trajectory status) plus one CSV per observable. The manifest
hash covers only the resolved configuration, so rerunning from a manifest
reproduces every CSV byte for byte; wall times and other non-reproducible
facts live outside the hashed section. CSV floats are written with repr
(shortest round-trip form) for the same reason.
"""

import hashlib
import json
import os

import numpy as np

from . import __version__


def config_hash(subcommand, config):
    """Hash of the resolved run configuration (execution fields excluded)."""
    payload = json.dumps({"subcommand": subcommand, "config": config}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _format(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, columns, arrays, comments):
    """Write one observable table: # comment lines, header row, data rows."""
    arrays = [np.asarray(a) for a in arrays]
    with open(path, "w", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(_format(v) for v in row) + "\n")


def provenance_comments(subcommand, cfg_hash, extra=()):
    lines = [f"pxpsim {__version__} {subcommand}", f"config-hash: {cfg_hash}"]
    lines.extend(extra)
    return lines


def check_out_dir(out_dir):
    """Fail before any computation if the output directory is unusable."""
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".pxpsim-write-probe")
    try:
        with open(probe, "w") as fh:
            fh.write("")
    finally:
        if os.path.exists(probe):
            os.remove(probe)


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def emit_manifest(out_dir, subcommand, config, run_info):
    """Write manifest.json: hashed config section plus unhashed run facts."""
    config = _jsonable(config)
    manifest = {
        "tool": "pxpsim",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "config_hash": config_hash(subcommand, config),
        "run": _jsonable(run_info),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
