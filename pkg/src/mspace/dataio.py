"""Canonical on-disk dataset format and result serialization.

A dataset is a directory with a JSON manifest plus two CSVs:

    manifest.json   {"name", "n", "d", "T", "timestep_seconds"?,
                     "edges": path, "features": path, "provenance"?}
    edges.csv       header "src,dst" or "src,dst,weight"; one edge per
                    row; weights are accepted but binarized on load and
                    the relation symmetrized
    features.csv    header "v0_f0,...,v{n-1}_f{d-1}" (node-major); one
                    snapshot per row, T rows total

Node IDs are 0-based contiguous integers, so ascending-ID ordering
equals integer order.  Floats are serialized with 17 significant
digits, which round-trips float64 bit-exactly.  T counts snapshots.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import TemporalGraphDataset


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def feature_columns(n: int, d: int) -> list[str]:
    return [f"v{v}_f{j}" for v in range(n) for j in range(d)]


def load_dataset(manifest_path) -> TemporalGraphDataset:
    """Load and validate a dataset directory via its manifest."""
    manifest_path = os.fspath(manifest_path)
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"manifest not found: {manifest_path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON ({exc})")
    for field in ("name", "n", "d", "T", "edges", "features"):
        if field not in manifest:
            raise DataError(f"{manifest_path}: manifest missing field {field!r}")
    n, d, T = manifest["n"], manifest["d"], manifest["T"]
    base = os.path.dirname(os.path.abspath(manifest_path))
    edge_path = os.path.join(base, manifest["edges"])
    feat_path = os.path.join(base, manifest["features"])

    adjacency = _read_edges(edge_path, n)
    features = _read_features(feat_path, n, d, T)
    return TemporalGraphDataset(
        adjacency=adjacency,
        features=features,
        name=manifest["name"],
        timestep_seconds=manifest.get("timestep_seconds"),
    )


def _read_edges(path, n) -> np.ndarray:
    adjacency = np.zeros((n, n), dtype=np.int8)
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"edge file not found: {path}")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["src", "dst"]:
            raise DataError(f"{path}: expected header 'src,dst[,weight]', got {header}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) not in (2, 3):
                raise DataError(f"{path}: row {row_no}: expected 2 or 3 columns, got {len(row)}")
            try:
                src, dst = int(row[0]), int(row[1])
            except ValueError:
                raise DataError(f"{path}: row {row_no}: non-integer node id {row[:2]}")
            if len(row) == 3:
                try:
                    float(row[2])
                except ValueError:
                    raise DataError(f"{path}: row {row_no}: non-numeric weight {row[2]!r}")
            for node in (src, dst):
                if not 0 <= node < n:
                    raise DataError(
                        f"{path}: row {row_no}: node id {node} outside [0, {n})"
                    )
            if src != dst:
                adjacency[src, dst] = 1
                adjacency[dst, src] = 1
    return adjacency


def _read_features(path, n, d, T) -> np.ndarray:
    expected = feature_columns(n, d)
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"feature file not found: {path}")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: missing header row")
        header = [c.strip() for c in header]
        if header != expected:
            raise DataError(
                f"{path}: header mismatch: expected {len(expected)} node-major "
                f"columns v0_f0..v{n - 1}_f{d - 1}, got {header[:4]}..."
            )
        rows = np.empty((T, n * d))
        count = 0
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if count >= T:
                raise DataError(f"{path}: more than the expected {T} snapshot rows")
            if len(row) != n * d:
                raise DataError(
                    f"{path}: row {row_no}: expected {n * d} cells, got {len(row)}"
                )
            for col, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_no}, column {expected[col]}: "
                        f"non-numeric cell {cell!r}"
                    )
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: row {row_no}, column {expected[col]}: "
                        f"non-finite value {cell!r}"
                    )
                rows[count, col] = value
            count += 1
        if count != T:
            raise DataError(f"{path}: expected {T} snapshot rows, found {count}")
    return rows.reshape(T, n, d)


def save_dataset(dataset: TemporalGraphDataset, out_dir, provenance: dict | None = None) -> str:
    """Write manifest + CSVs; returns the manifest path.

    load(save(x)) reproduces x bit-exactly for finite float64 features.
    """
    os.makedirs(out_dir, exist_ok=True)
    edge_path = os.path.join(out_dir, "edges.csv")
    feat_path = os.path.join(out_dir, "features.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")

    lines = ["src,dst"]
    src_idx, dst_idx = np.nonzero(np.triu(dataset.adjacency, k=1))
    lines.extend(f"{s},{t}" for s, t in zip(src_idx, dst_idx))
    with open(edge_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    flat = dataset.features.reshape(dataset.num_snapshots, -1)
    with open(feat_path, "w") as fh:
        fh.write(",".join(feature_columns(dataset.n, dataset.d)) + "\n")
        for row in flat:
            fh.write(",".join(_fmt(x) for x in row) + "\n")

    manifest = {
        "name": dataset.name,
        "n": dataset.n,
        "d": dataset.d,
        "T": dataset.num_snapshots,
        "edges": "edges.csv",
        "features": "features.csv",
    }
    if dataset.timestep_seconds is not None:
        manifest["timestep_seconds"] = dataset.timestep_seconds
    if provenance is not None:
        manifest["provenance"] = provenance
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


# ---------------------------------------------------------------------------
# result tables


RESULT_COLUMNS = ("dataset", "method", "variant", "q", "rmse", "mae",
                  "wall_time", "seed", "config_hash")


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    method: str
    variant: str
    q: int
    rmse: float
    mae: float
    wall_time: float
    seed: int
    config_hash: str

    def as_csv(self) -> str:
        return ",".join([
            self.dataset, self.method, self.variant, str(self.q),
            _fmt(self.rmse), _fmt(self.mae), f"{self.wall_time:.6f}",
            str(self.seed), self.config_hash,
        ])


def write_results(rows, path) -> None:
    """Create/overwrite a result table with a stable column order."""
    payload = ",".join(RESULT_COLUMNS) + "\n" + "".join(r.as_csv() + "\n" for r in rows)
    with open(path, "w") as fh:
        fh.write(payload)


def append_results(rows, path) -> None:
    """Append a batch of rows as one write so rows never interleave."""
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    payload = "".join(r.as_csv() + "\n" for r in rows)
    if fresh:
        payload = ",".join(RESULT_COLUMNS) + "\n" + payload
    with open(path, "a") as fh:
        fh.write(payload)


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
