"""On-disk dataset layout.

    <dir>/manifest.json
    <dir>/<subject_id>/source_<n>.csv
    <dir>/<subject_id>/target_<n_lr>.csv
    <dir>/<subject_id>/target_<n_hr>.csv

CSV files are headerless comma-separated decimal floats, n rows by n
columns, written with shortest round-trip formatting so save/load is
bit-exact.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .braingraph import BrainGraph, Dataset, SubjectTriple
from .errors import DataFormatError

MANIFEST_NAME = "manifest.json"
ASYMMETRY_TOL = 1e-6


def _write_matrix(path: Path, adj: np.ndarray) -> None:
    lines = [",".join(repr(float(v)) for v in row) for row in adj]
    path.write_text("\n".join(lines) + "\n")


def _read_matrix(path: Path) -> np.ndarray:
    if not path.is_file():
        raise DataFormatError(f"{path}: missing matrix file")
    rows = []
    text_rows = path.read_text().strip("\n").split("\n")
    for r, line in enumerate(text_rows):
        cells = line.split(",")
        row = []
        for c, cell in enumerate(cells):
            try:
                value = float(cell)
            except ValueError:
                raise DataFormatError(f"{path}: unparseable float at row {r}, column {c}: {cell!r}")
            if math.isinf(value) or math.isnan(value):
                raise DataFormatError(f"{path}: non-finite value at row {r}, column {c}: {cell!r}")
            row.append(value)
        rows.append(row)
    n = len(rows)
    for r, row in enumerate(rows):
        if len(row) != n:
            raise DataFormatError(f"{path}: not square, row {r} has {len(row)} columns for {n} rows")
    adj = np.array(rows, dtype=np.float64)
    gap = np.abs(adj - adj.T).max() if n else 0.0
    if gap > ASYMMETRY_TOL:
        raise DataFormatError(f"{path}: asymmetric beyond {ASYMMETRY_TOL} (max gap {gap:.3g})")
    # tolerate tiny external asymmetry; exact files pass through unchanged
    return (adj + adj.T) / 2.0


def save_dataset(dataset: Dataset, directory) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    n_src, n_lr, n_hr = dataset.resolutions
    for subject in dataset.subjects:
        sub_dir = root / subject.subject_id
        sub_dir.mkdir(exist_ok=True)
        _write_matrix(sub_dir / f"source_{n_src}.csv", subject.source.adjacency)
        _write_matrix(sub_dir / f"target_{n_lr}.csv", subject.target_lr.adjacency)
        _write_matrix(sub_dir / f"target_{n_hr}.csv", subject.target_hr.adjacency)
    manifest = {
        "format": "graphstairs-dataset",
        "version": 1,
        "seed": dataset.seed,
        "provenance": dataset.provenance,
        "shift": {"mean": dataset.shift[0], "std": dataset.shift[1]},
        "resolutions": list(dataset.resolutions),
        "subject_ids": dataset.subject_ids,
    }
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(directory) -> Dataset:
    root = Path(directory)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DataFormatError(f"{manifest_path}: missing manifest")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{manifest_path}: invalid JSON ({e})")
    for key in ("seed", "subject_ids", "resolutions", "shift"):
        if key not in manifest:
            raise DataFormatError(f"{manifest_path}: missing key {key!r}")
    n_src, n_lr, n_hr = manifest["resolutions"]
    subjects = []
    for sid in manifest["subject_ids"]:
        sub_dir = root / sid
        src = _read_matrix(sub_dir / f"source_{n_src}.csv")
        lr = _read_matrix(sub_dir / f"target_{n_lr}.csv")
        hr = _read_matrix(sub_dir / f"target_{n_hr}.csv")
        if src.shape != (n_src, n_src):
            raise DataFormatError(
                f"{sub_dir}: source matrix is {src.shape}, manifest says {n_src}")
        subjects.append(SubjectTriple(
            subject_id=sid,
            source=BrainGraph(src, "morphological", n_src),
            target_lr=BrainGraph(lr, "functional", n_lr),
            target_hr=BrainGraph(hr, "functional", n_hr),
        ))
    return Dataset(
        subjects=subjects,
        seed=int(manifest["seed"]),
        provenance="loaded",
        shift=(float(manifest["shift"]["mean"]), float(manifest["shift"]["std"])),
    )
