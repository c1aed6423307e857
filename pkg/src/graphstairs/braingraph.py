"""Weighted brain-graph data model and cross-validation splits.

A connectivity matrix is valid when it is square, symmetric to 1e-9, has a
zero diagonal, and all weights lie in [0, 1]. Functional connectivity is
treated as nonnegative (absolute-correlation semantics) so the resolution
map's outputs are representable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

MODALITIES = ("morphological", "functional")
SYMMETRY_TOL = 1e-9


def check_adjacency(adj: np.ndarray, name: str = "adjacency") -> np.ndarray:
    """Validate one connectivity matrix; returns it as float64."""
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ContractError(f"{name}: expected a square matrix, got shape {adj.shape}")
    if not np.isfinite(adj).all():
        raise ContractError(f"{name}: non-finite entries")
    if np.abs(adj - adj.T).max() > SYMMETRY_TOL:
        raise ContractError(f"{name}: not symmetric within {SYMMETRY_TOL}")
    if np.abs(np.diag(adj)).max() > 0:
        raise ContractError(f"{name}: diagonal must be zero")
    if adj.min() < 0.0 or adj.max() > 1.0:
        raise ContractError(f"{name}: weights must lie in [0, 1], "
                            f"got [{adj.min():.4g}, {adj.max():.4g}]")
    return adj


def check_adjacency_batch(batch, n_nodes: int | None = None, name: str = "X") -> np.ndarray:
    """Validate a stack of connectivity matrices shaped (n_subjects, n, n)."""
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 3:
        raise ContractError(f"{name}: expected shape (n_subjects, n, n), got {arr.shape}")
    if n_nodes is not None and arr.shape[1:] != (n_nodes, n_nodes):
        raise ContractError(f"{name}: expected graphs of size {n_nodes}, got {arr.shape[1:]}")
    for i in range(arr.shape[0]):
        check_adjacency(arr[i], name=f"{name}[{i}]")
    return arr


@dataclass(frozen=True)
class BrainGraph:
    """Symmetric weighted connectivity matrix tagged with modality and resolution."""

    adjacency: np.ndarray
    modality: str
    resolution: int

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ContractError(f"unknown modality {self.modality!r}")
        adj = check_adjacency(self.adjacency)
        if adj.shape[0] != self.resolution:
            raise ContractError(
                f"resolution {self.resolution} does not match matrix of shape {adj.shape}")
        object.__setattr__(self, "adjacency", adj)

    @property
    def n_nodes(self) -> int:
        return self.resolution


@dataclass(frozen=True)
class SubjectTriple:
    """One subject's source graph plus its two target graphs."""

    subject_id: str
    source: BrainGraph
    target_lr: BrainGraph
    target_hr: BrainGraph

    def __post_init__(self):
        if self.source.modality != "morphological":
            raise ContractError("source graph must be morphological")
        if self.target_lr.modality != "functional" or self.target_hr.modality != "functional":
            raise ContractError("target graphs must be functional")
        if not (self.source.resolution < self.target_lr.resolution < self.target_hr.resolution):
            raise ContractError(
                "resolutions must increase source < target_lr < target_hr, got "
                f"{self.source.resolution}/{self.target_lr.resolution}/{self.target_hr.resolution}")


@dataclass
class Dataset:
    subjects: list[SubjectTriple]
    seed: int
    provenance: str = "synthetic"
    shift: tuple[float, float] = (0.0, 0.0)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if not self.subjects:
            raise ContractError("dataset must contain at least one subject")
        ids = [s.subject_id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise ContractError("subject ids must be unique")
        if self.provenance not in ("synthetic", "loaded"):
            raise ContractError(f"unknown provenance {self.provenance!r}")
        self._index = {s.subject_id: s for s in self.subjects}

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.subjects]

    def get(self, subject_id: str) -> SubjectTriple:
        return self._index[subject_id]

    @property
    def resolutions(self) -> tuple[int, int, int]:
        s = self.subjects[0]
        return (s.source.resolution, s.target_lr.resolution, s.target_hr.resolution)


@dataclass(frozen=True)
class FoldSplit:
    k: int
    folds: list[tuple[list[str], list[str]]]  # (train ids, test ids) per fold


def kfold_split(dataset: Dataset, k: int, seed: int) -> FoldSplit:
    """Seeded shuffle then contiguous partition into k test folds of sizes
    differing by at most one."""
    if k < 2:
        raise ContractError(f"k must be >= 2, got {k}")
    ids = dataset.subject_ids
    if len(ids) < k:
        raise ContractError(f"cannot split {len(ids)} subjects into {k} folds")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    base, extra = divmod(len(order), k)
    folds = []
    start = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        test = order[start:start + size]
        train = order[:start] + order[start + size:]
        folds.append((train, test))
        start += size
    return FoldSplit(k=k, folds=folds)
