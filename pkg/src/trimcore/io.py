"""File formats: dataset/coreset CSV, manifests, sensitivity dumps, op logs.

Dataset CSV:      id,label,w,f1..fd      (label blank for unsupervised)
Coreset CSV:      id,w,f1..fd(,label)    (label column only when labeled)
Dataset manifest: JSON with dim, n, path (plus generator params if any)
Sensitivity:      CSV id,s_i + JSON {S, method, tol}
Op log:           JSON lines {"op": "insert"|"delete"|"update"|"changez", ...}

Floats are written with repr (shortest round-trip), so re-running a
deterministic pipeline reproduces files byte for byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .builders import Coreset
from .data import WeightedDataset
from .errors import ConfigError, DataFormatError
from .sensitivity import SensitivityProfile

__all__ = [
    "write_dataset_csv",
    "read_dataset_csv",
    "write_manifest",
    "read_manifest",
    "write_coreset",
    "read_coreset_csv",
    "write_sensitivity",
    "read_oplog",
    "write_oplog",
]


def _fmt(v: float) -> str:
    return repr(float(v))


def write_dataset_csv(path: str | Path, data: WeightedDataset) -> None:
    d = data.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "w"] + [f"f{j + 1}" for j in range(d)])
        for i in range(len(data)):
            label = "" if data.y is None else _fmt(data.y[i])
            writer.writerow(
                [int(data.ids[i]), label, _fmt(data.w[i])] + [_fmt(v) for v in data.X[i]]
            )


def read_dataset_csv(path: str | Path) -> WeightedDataset:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if header[:3] != ["id", "label", "w"]:
            raise DataFormatError(f"{path}: header must start with id,label,w, got {header[:3]}")
        d = len(header) - 3
        if d < 1 or header[3:] != [f"f{j + 1}" for j in range(d)]:
            raise DataFormatError(f"{path}: feature columns must be f1..fd, got {header[3:]}")
        ids, labels, weights, feats = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + d:
                raise DataFormatError(f"{path}:{lineno}: expected {3 + d} columns, got {len(row)}")
            try:
                ids.append(int(row[0]))
                labels.append(None if row[1] == "" else float(row[1]))
                weights.append(float(row[2]))
                feats.append([float(v) for v in row[3:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    if not ids:
        raise DataFormatError(f"{path}: no data rows")
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for pid in ids:
            if pid in seen:
                dup = pid
                break
            seen.add(pid)
        raise DataFormatError(f"{path}: duplicate id {dup}")
    has_labels = [v is not None for v in labels]
    if any(has_labels) and not all(has_labels):
        raise DataFormatError(f"{path}: labels must be all present or all blank")
    y = labels if all(has_labels) else None
    return WeightedDataset(ids, np.array(feats), np.array(weights), y)


def write_manifest(path: str | Path, data: WeightedDataset, csv_path: str | Path, **extra) -> None:
    manifest = {"dim": data.dim, "n": len(data), "path": str(csv_path)}
    manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    for key in ("dim", "n", "path"):
        if key not in manifest:
            raise DataFormatError(f"{path}: manifest missing {key!r}")
    return manifest


def write_coreset(csv_path: str | Path, json_path: str | Path, coreset: Coreset) -> None:
    """Coreset CSV (id,w,f1..fd and a trailing label column when labeled)
    plus a provenance JSON sidecar."""
    data = coreset.data
    d = data.dim
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["id", "w"] + [f"f{j + 1}" for j in range(d)]
        if data.y is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(len(data)):
            row = [int(data.ids[i]), _fmt(data.w[i])] + [_fmt(v) for v in data.X[i]]
            if data.y is not None:
                row.append(_fmt(data.y[i]))
            writer.writerow(row)
    with open(json_path, "w") as fh:
        json.dump(coreset.provenance(), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def read_coreset_csv(path: str | Path) -> WeightedDataset:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"coreset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if header[:2] != ["id", "w"]:
            raise DataFormatError(f"{path}: header must start with id,w, got {header[:2]}")
        labeled = header[-1] == "label"
        d = len(header) - 2 - (1 if labeled else 0)
        if d < 1 or header[2 : 2 + d] != [f"f{j + 1}" for j in range(d)]:
            raise DataFormatError(f"{path}: feature columns must be f1..fd")
        ids, weights, feats, labels = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}"
                )
            try:
                ids.append(int(row[0]))
                weights.append(float(row[1]))
                feats.append([float(v) for v in row[2 : 2 + d]])
                if labeled:
                    labels.append(float(row[-1]))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    if not ids:
        raise DataFormatError(f"{path}: no data rows")
    return WeightedDataset(
        ids, np.array(feats), np.array(weights), labels if labeled else None,
        require_unique_ids=False,
    )


def write_sensitivity(
    csv_path: str | Path, json_path: str | Path, profile: SensitivityProfile
) -> None:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "s_i"])
        for pid, s in zip(profile.ids, profile.s):
            writer.writerow([int(pid), _fmt(s)])
    with open(json_path, "w") as fh:
        json.dump(
            {"S": float(profile.S), "method": profile.method, "tol": profile.tol},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")


_OP_KINDS = {"insert", "delete", "update", "changez"}


def read_oplog(path: str | Path) -> list[dict]:
    """Parse a JSON-lines operation log, validating per-op fields."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"op log not found: {path}")
    ops = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                op = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if not isinstance(op, dict) or op.get("op") not in _OP_KINDS:
                raise DataFormatError(f"{path}:{lineno}: 'op' must be one of {sorted(_OP_KINDS)}")
            kind = op["op"]
            if kind in ("insert", "update"):
                if "id" not in op or "features" not in op:
                    raise DataFormatError(f"{path}:{lineno}: {kind} needs id and features")
            elif kind == "delete":
                if "id" not in op:
                    raise DataFormatError(f"{path}:{lineno}: delete needs id")
            elif "dz" not in op:
                raise DataFormatError(f"{path}:{lineno}: changez needs dz")
            ops.append(op)
    return ops


def write_oplog(path: str | Path, ops: list[dict]) -> None:
    with open(path, "w") as fh:
        for op in ops:
            fh.write(json.dumps(op, sort_keys=True))
            fh.write("\n")
