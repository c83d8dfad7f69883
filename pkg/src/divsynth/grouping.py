"""Partition attribute dimensions into groups by clustering their vectors.

Lloyd iterations on the squared-error objective: assign each row to its
nearest centroid (ties to the lowest group index), then recompute centroids
as member means. Initialization is greedy farthest-point seeding from the
seeded stream; empty clusters are repaired with the point farthest from its
current centroid.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DatasetBundle, EmbeddingTable
from .errors import ArgumentError, EmptyGroupError, ShapeError, WriteError
from .rng import derive_rng


@dataclass
class AttributeGroups:
    """A partition of the d_a attribute dimensions into m groups.

    ``assignment`` holds 1-based group indices (0 is reserved for "no mask"
    downstream). ``objective_trace`` records the squared-error objective
    after each Lloyd update, for monotonicity checks.
    """

    assignment: np.ndarray     # (d_a,) int64 in 1..m
    centroids: np.ndarray      # (m, d_w) float64
    objective: float
    m: int
    converged: bool = True
    n_iterations: int = 0
    objective_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        self.centroids = np.asarray(self.centroids, dtype=np.float64)

    def members(self, i: int) -> np.ndarray:
        """Attribute-dimension indices belonging to group i (1-based)."""
        return np.flatnonzero(self.assignment == i)

    @property
    def d_a(self) -> int:
        return self.assignment.shape[0]


def clustering_objective(table: EmbeddingTable, groups: AttributeGroups) -> float:
    """Sum over groups of squared distances from member rows to the centroid."""
    x = table.vectors
    if groups.assignment.shape[0] != x.shape[0]:
        raise ShapeError(
            f"assignment length {groups.assignment.shape[0]} != {x.shape[0]} rows")
    if groups.centroids.shape != (groups.m, x.shape[1]):
        raise ShapeError(
            f"centroids shape {groups.centroids.shape} != ({groups.m}, {x.shape[1]})")
    diff = x - groups.centroids[groups.assignment - 1]
    return float(np.sum(diff * diff))


def update_centroids(table: EmbeddingTable, assignment: np.ndarray,
                     m: int | None = None) -> np.ndarray:
    """Mean vector of each group's member rows; raises on an empty group."""
    assignment = np.asarray(assignment, dtype=np.int64)
    x = table.vectors
    if assignment.shape[0] != x.shape[0]:
        raise ShapeError(
            f"assignment length {assignment.shape[0]} != {x.shape[0]} rows")
    if m is None:
        m = int(assignment.max())
    centroids = np.empty((m, x.shape[1]), dtype=np.float64)
    for i in range(1, m + 1):
        members = assignment == i
        if not members.any():
            raise EmptyGroupError(f"group {i} has no members")
        centroids[i - 1] = x[members].mean(axis=0)
    return centroids


def _squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.sum(diff * diff, axis=2)


def _farthest_point_seeds(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(x.shape[0]))]
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    while len(chosen) < m:
        d2[chosen] = -1.0                      # never reseed an already chosen row
        nxt = int(np.argmax(d2))               # first max = lowest-index tie-break
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((x - x[nxt]) ** 2, axis=1))
    return x[chosen].copy()


def _lloyd(table: EmbeddingTable, m: int, centroids: np.ndarray,
           max_iters: int) -> AttributeGroups:
    x = table.vectors
    assignment = None
    trace: list[float] = []
    converged = False
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        new_assignment = np.argmin(_squared_distances(x, centroids), axis=1) + 1

        # Repair empty groups: move the globally worst-placed point (from a
        # group that can spare one) into each empty group, lowest index first.
        counts = np.bincount(new_assignment, minlength=m + 1)
        for empty in np.flatnonzero(counts[1:] == 0) + 1:
            resid = np.sum((x - centroids[new_assignment - 1]) ** 2, axis=1)
            resid[counts[new_assignment] <= 1] = -1.0
            donor = int(np.argmax(resid))
            counts[new_assignment[donor]] -= 1
            new_assignment[donor] = empty
            counts[empty] += 1

        if assignment is not None and np.array_equal(new_assignment, assignment):
            converged = True
            break
        assignment = new_assignment
        centroids = update_centroids(table, assignment, m)
        diff = x - centroids[assignment - 1]
        trace.append(float(np.sum(diff * diff)))

    return AttributeGroups(
        assignment=assignment,
        centroids=centroids,
        objective=trace[-1],
        m=m,
        converged=converged,
        n_iterations=iterations,
        objective_trace=trace,
    )


def cluster_attribute_dimensions(table: EmbeddingTable, m: int, seed: int,
                                 max_iters: int = 200,
                                 n_restarts: int = 8) -> AttributeGroups:
    """Cluster the embedding rows into m groups; deterministic given seed.

    The first start is greedy farthest-point seeding; the remaining starts
    draw m distinct rows from the same seeded stream. The best fixed point
    by objective wins (first encountered on ties).
    """
    x = table.vectors
    d_a = x.shape[0]
    if not 2 <= m <= d_a:
        raise ArgumentError(f"m={m} outside 2..{d_a}")
    if max_iters < 1 or n_restarts < 1:
        raise ArgumentError("max_iters and n_restarts must be >= 1")

    rng = derive_rng(seed, "cluster_init")
    best: AttributeGroups | None = None
    for restart in range(n_restarts):
        if restart == 0:
            centroids = _farthest_point_seeds(x, m, rng)
        else:
            centroids = x[rng.choice(d_a, size=m, replace=False)].copy()
        result = _lloyd(table, m, centroids, max_iters)
        if best is None or result.objective < best.objective:
            best = result
    return best


def profile_embeddings(bundle: DatasetBundle) -> EmbeddingTable:
    """Fallback when no word vectors exist: embed attribute dimension j as
    its value profile across classes (column j of the attribute matrix)."""
    return EmbeddingTable(vectors=bundle.attributes.T.copy(),
                          names=list(bundle.attribute_names))


def partitions_match(a: np.ndarray, b: np.ndarray) -> bool:
    """True when two assignments induce the same partition up to relabeling."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    mapping: dict[int, int] = {}
    used: set[int] = set()
    for ga, gb in zip(a.tolist(), b.tolist()):
        if ga in mapping:
            if mapping[ga] != gb:
                return False
        else:
            if gb in used:
                return False
            mapping[ga] = gb
            used.add(gb)
    return True


def save_groups(groups: AttributeGroups, names: list[str], out_dir: str | Path) -> Path:
    """Write the (attribute, group) CSV plus a JSON sidecar with the objective."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "groups.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["attribute", "group_index"])
            for name, g in zip(names, groups.assignment):
                writer.writerow([name, str(int(g))])
        sidecar = {
            "m": groups.m,
            "objective": groups.objective,
            "converged": groups.converged,
            "n_iterations": groups.n_iterations,
            "centroids": groups.centroids.tolist(),
        }
        (out_dir / "groups.json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise WriteError(f"cannot write groups to {out_dir}: {exc}") from exc
    return csv_path


def load_groups(out_dir: str | Path) -> AttributeGroups:
    out_dir = Path(out_dir)
    sidecar = json.loads((out_dir / "groups.json").read_text(encoding="utf-8"))
    with open(out_dir / "groups.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        assignment = np.asarray([int(row[1]) for row in reader], dtype=np.int64)
    return AttributeGroups(
        assignment=assignment,
        centroids=np.asarray(sidecar["centroids"], dtype=np.float64),
        objective=float(sidecar["objective"]),
        m=int(sidecar["m"]),
        converged=bool(sidecar["converged"]),
        n_iterations=int(sidecar["n_iterations"]),
    )
